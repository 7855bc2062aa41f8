#pragma once

// JSON descriptors for fields, kernels, matrices, domains and grids.
//
// Strings are shorthands: "sign-x2", "linear:e11", "one", "flow:T=1,5,20",
// "interval", "0.2:0.025" (geometric, factor 1/2). Objects carry a "kind" key
// and explicit parameters; see README for the full grammar.

#include "renorm/commutator.hpp"
#include "renorm/expflow.hpp"
#include "renorm/neumann.hpp"

#include <json.hpp>

#include <stdexcept>
#include <string>
#include <vector>

namespace renorm {

using Json = nlohmann::ordered_json;

/// Malformed or unresolvable descriptor; the CLI maps it to exit status 2.
class DescriptorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

HSMatrix parse_matrix(const Json& j, int dim, std::uint64_t seed);
BVField parse_field(const Json& j, int dim, std::uint64_t seed);

/// Matrix used by flow kernels when none is given: the polar part of Db at
/// the first jump, else of the absolutely continuous part at the origin.
HSMatrix default_kernel_matrix(const BVField& b, const GaussianSpace& space);

/// One descriptor may expand to several kernels ("flow:T=1,5,20").
std::vector<Mollifier> parse_kernels(const Json& j, int dim, const HSMatrix& flow_matrix,
                                     const GaussianSpace& space);

/// Scalar function of x1..xN: a number or an expression string.
ScalarFn parse_scalar(const Json& j, int dim);

/// Test functions: "one", "battery" (all), or battery item names.
std::vector<TestFunction> parse_test_functions(const Json& j, int dim);
std::vector<RenormFunction> parse_betas(const Json& j);

Domain parse_domain(const Json& j);

/// Numeric grid: a number, an array, "a,b,c", or "start:stop" (geometric, factor 1/2).
std::vector<double> parse_grid(const Json& j);

GaussianSpace parse_space(const Json& j, int dim, std::uint64_t seed);

}  // namespace renorm
