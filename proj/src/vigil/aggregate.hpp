#ifndef VIGIL_AGGREGATE_HPP
#define VIGIL_AGGREGATE_HPP

#include <Eigen/Dense>
#include <optional>
#include <string>

#include "vigil/trace.hpp"

namespace vigil {

enum class AggMethod { First, Last, Mean, FirstAndLast };

AggMethod agg_method_from_string(const std::string& s);
std::string agg_method_name(AggMethod m);

// Which raw tensor the features were dumped from; aggregation treats both
// identically, the tag just travels with the spec.
enum class FeatureVariant { NotApplicable, Encoded, PreLogits };

// How a step's multi-axis feature tensor collapses to one vector. Token
// layouts use token_method; horizon/diffusion layouts use hori + diff
// methods (diffusion axis reduced first).
struct AggregationSpec {
  std::optional<AggMethod> token_method;
  std::optional<AggMethod> hori_method;
  std::optional<AggMethod> diff_method;
  FeatureVariant variant = FeatureVariant::NotApplicable;

  static AggregationSpec token(AggMethod m);
  static AggregationSpec flow(AggMethod hori, AggMethod diff);
  // Mean on whichever axes the layout has.
  static AggregationSpec defaults_for(EmbeddingLayout layout);
};

// E is n x d' (row per token position). FirstAndLast returns 2d'.
Eigen::VectorXd aggregate_token_axis(const Eigen::MatrixXd& E, AggMethod method);

// Tensor is H x k x d row-major; reduces the diffusion axis k first, then
// the horizon axis H. FirstAndLast doubles the width per axis it touches.
Eigen::VectorXd aggregate_flow_axes(const double* data, int hori, int diff,
                                    int feat, AggMethod hori_method,
                                    AggMethod diff_method);

// Output width for a given layout/spec, without touching data.
int aggregated_dim(const EmbeddingTensor& shape, const AggregationSpec& spec);

// Collapses one step's embedding; validates the spec matches the layout.
Eigen::VectorXd aggregate_step(const EmbeddingTensor& emb,
                               const AggregationSpec& spec);

// Row t = aggregated embedding of step t.
Eigen::MatrixXd rollout_embeddings(const Rollout& r, const AggregationSpec& spec);

}  // namespace vigil

#endif
