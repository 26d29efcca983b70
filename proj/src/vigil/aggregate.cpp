#include "vigil/aggregate.hpp"

#include "vigil/error.hpp"

namespace vigil {

AggMethod agg_method_from_string(const std::string& s) {
  if (s == "first") return AggMethod::First;
  if (s == "last") return AggMethod::Last;
  if (s == "mean") return AggMethod::Mean;
  if (s == "first_and_last") return AggMethod::FirstAndLast;
  fail(ErrorCode::InvalidArgument, "unknown aggregation method '" + s +
                                       "' (expected first|last|mean|first_and_last)");
}

std::string agg_method_name(AggMethod m) {
  switch (m) {
    case AggMethod::First: return "first";
    case AggMethod::Last: return "last";
    case AggMethod::Mean: return "mean";
    case AggMethod::FirstAndLast: return "first_and_last";
  }
  return "mean";
}

AggregationSpec AggregationSpec::token(AggMethod m) {
  AggregationSpec s;
  s.token_method = m;
  return s;
}

AggregationSpec AggregationSpec::flow(AggMethod hori, AggMethod diff) {
  AggregationSpec s;
  s.hori_method = hori;
  s.diff_method = diff;
  return s;
}

AggregationSpec AggregationSpec::defaults_for(EmbeddingLayout layout) {
  if (layout == EmbeddingLayout::HoriDiffFeat)
    return flow(AggMethod::Mean, AggMethod::Mean);
  return token(AggMethod::Mean);
}

namespace {

int reduced_width(int d, AggMethod m) {
  return m == AggMethod::FirstAndLast ? 2 * d : d;
}

// Reduce the rows of an n x d matrix to one vector.
Eigen::VectorXd reduce_rows(const Eigen::MatrixXd& E, AggMethod method) {
  const long n = E.rows();
  const long d = E.cols();
  switch (method) {
    case AggMethod::First:
      return E.row(0).transpose();
    case AggMethod::Last:
      return E.row(n - 1).transpose();
    case AggMethod::Mean:
      return E.colwise().mean().transpose();
    case AggMethod::FirstAndLast: {
      Eigen::VectorXd out(2 * d);
      out.head(d) = E.row(0).transpose();
      out.tail(d) = E.row(n - 1).transpose();
      return out;
    }
  }
  fail(ErrorCode::Internal, "unreachable aggregation method");
}

}  // namespace

Eigen::VectorXd aggregate_token_axis(const Eigen::MatrixXd& E, AggMethod method) {
  require(E.rows() >= 1 && E.cols() >= 1, ErrorCode::InvalidArgument,
          "aggregate_token_axis: empty matrix");
  return reduce_rows(E, method);
}

Eigen::VectorXd aggregate_flow_axes(const double* data, int hori, int diff,
                                    int feat, AggMethod hori_method,
                                    AggMethod diff_method) {
  require(hori >= 1 && diff >= 1 && feat >= 1, ErrorCode::InvalidArgument,
          "aggregate_flow_axes: empty tensor");
  const int mid = reduced_width(feat, diff_method);
  Eigen::MatrixXd per_hori(hori, mid);
  for (int h = 0; h < hori; ++h) {
    // slice [h] is a diff x feat block, row-major
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                   Eigen::RowMajor>>
        slice(data + static_cast<std::size_t>(h) * diff * feat, diff, feat);
    per_hori.row(h) = reduce_rows(slice, diff_method).transpose();
  }
  return reduce_rows(per_hori, hori_method);
}

int aggregated_dim(const EmbeddingTensor& shape, const AggregationSpec& spec) {
  if (shape.layout == EmbeddingLayout::TokenFeat) {
    require(spec.token_method.has_value(), ErrorCode::InvalidArgument,
            "token-layout features need a token aggregation method");
    return reduced_width(shape.feat, *spec.token_method);
  }
  if (shape.layout == EmbeddingLayout::HoriDiffFeat) {
    require(spec.hori_method.has_value() && spec.diff_method.has_value(),
            ErrorCode::InvalidArgument,
            "horizon/diffusion-layout features need hori and diff methods");
    return reduced_width(reduced_width(shape.feat, *spec.diff_method),
                         *spec.hori_method);
  }
  fail(ErrorCode::InvalidArgument, "step has no embedding to aggregate");
}

Eigen::VectorXd aggregate_step(const EmbeddingTensor& emb,
                               const AggregationSpec& spec) {
  if (emb.layout == EmbeddingLayout::TokenFeat) {
    require(spec.token_method.has_value(), ErrorCode::InvalidArgument,
            "token-layout features need a token aggregation method");
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                   Eigen::RowMajor>>
        E(emb.data.data(), emb.rows, emb.feat);
    return aggregate_token_axis(E, *spec.token_method);
  }
  if (emb.layout == EmbeddingLayout::HoriDiffFeat) {
    require(spec.hori_method.has_value() && spec.diff_method.has_value(),
            ErrorCode::InvalidArgument,
            "horizon/diffusion-layout features need hori and diff methods");
    return aggregate_flow_axes(emb.data.data(), emb.hori, emb.diff, emb.feat,
                               *spec.hori_method, *spec.diff_method);
  }
  fail(ErrorCode::InvalidArgument, "step has no embedding to aggregate");
}

Eigen::MatrixXd rollout_embeddings(const Rollout& r, const AggregationSpec& spec) {
  require(!r.steps.empty(), ErrorCode::InvalidArgument, "rollout has no steps");
  const int d = aggregated_dim(r.steps.front().embedding, spec);
  Eigen::MatrixXd out(static_cast<long>(r.steps.size()), d);
  for (std::size_t t = 0; t < r.steps.size(); ++t)
    out.row(static_cast<long>(t)) =
        aggregate_step(r.steps[t].embedding, spec).transpose();
  return out;
}

}  // namespace vigil
