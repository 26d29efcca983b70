#include "vigil/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "vigil/error.hpp"
#include "vigil/rng.hpp"

namespace vigil {

void SynthConfig::validate() const {
  require(n_tasks >= 1, ErrorCode::InvalidArgument, "n_tasks must be >= 1");
  require(n_unseen_tasks >= 0 && n_unseen_tasks < n_tasks,
          ErrorCode::InvalidArgument, "n_unseen_tasks must be < n_tasks");
  require(rollouts_per_task >= 2, ErrorCode::InvalidArgument,
          "rollouts_per_task must be >= 2");
  require(fail_rate > 0.0 && fail_rate < 1.0, ErrorCode::InvalidArgument,
          "fail_rate must lie in (0,1)");
  require(feat_dim >= 2, ErrorCode::InvalidArgument, "feat_dim must be >= 2");
  require(rollout_len >= 2, ErrorCode::InvalidArgument,
          "rollout_len must be >= 2");
  require(separation >= 0.0, ErrorCode::InvalidArgument,
          "separation must be >= 0");
  require(noise_sigma > 0.0, ErrorCode::InvalidArgument,
          "noise_sigma must be > 0");
  require(separation * noise_sigma <= 2.0, ErrorCode::InvalidArgument,
          "separation * noise_sigma must be <= 2 (unit-sphere geometry)");
  require(task_spread >= 0.0, ErrorCode::InvalidArgument,
          "task_spread must be >= 0");
  require(onset_lo > 0.0 && onset_lo <= onset_hi && onset_hi < 1.0,
          ErrorCode::InvalidArgument,
          "failure onset range must satisfy 0 < lo <= hi < 1");
  require(embedding_rows >= 1, ErrorCode::InvalidArgument,
          "embedding_rows must be >= 1");
  require(embedding_layout == "token" || embedding_layout == "flow",
          ErrorCode::InvalidArgument, "embedding_layout must be token|flow");
  require(flow_hori >= 1 && flow_diff >= 1, ErrorCode::InvalidArgument,
          "flow axes must be >= 1");
  if (with_tokens)
    require(token_count >= 1, ErrorCode::InvalidArgument,
            "token_count must be >= 1");
  require(token_failure_corr >= 0.0 && token_failure_corr <= 1.0,
          ErrorCode::InvalidArgument, "token_failure_corr must lie in [0,1]");
  if (with_action_samples) {
    require(samples_per_step >= 2, ErrorCode::InvalidArgument,
            "samples_per_step must be >= 2");
    require(chunk_horizon >= 2, ErrorCode::InvalidArgument,
            "chunk_horizon must be >= 2");
    require(replan_stride >= 1 && replan_stride < chunk_horizon,
            ErrorCode::InvalidArgument,
            "replan_stride must lie in [1, chunk_horizon)");
    require(action_dim >= 1, ErrorCode::InvalidArgument,
            "action_dim must be >= 1");
  }
}

namespace {

constexpr double kActionNoise = 0.05;

std::string task_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "task%02d", i);
  return buf;
}

std::string rollout_name(int task, int r) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "task%02d_r%03d", task, r);
  return buf;
}

std::vector<double> lerp(const std::vector<double>& a,
                         const std::vector<double>& b, double frac) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    out[i] = a[i] + frac * (b[i] - a[i]);
  return out;
}

// unit direction orthogonal to c
std::vector<double> orthogonal_dir(const std::vector<double>& c, Rng& rng) {
  const int d = static_cast<int>(c.size());
  while (true) {
    std::vector<double> w = rng.unit_vector(d);
    double dot = 0.0;
    for (int i = 0; i < d; ++i) dot += w[i] * c[i];
    double norm2 = 0.0;
    for (int i = 0; i < d; ++i) {
      w[i] -= dot * c[i];
      norm2 += w[i] * w[i];
    }
    if (norm2 < 1e-12) continue;
    const double inv = 1.0 / std::sqrt(norm2);
    for (int i = 0; i < d; ++i) w[i] *= inv;
    return w;
  }
}

// point on the unit sphere at chord distance `chord` from unit vector c,
// offset along the (unit, orthogonal-to-c) direction w
std::vector<double> sphere_offset(const std::vector<double>& c, double chord,
                                  const std::vector<double>& w) {
  if (chord <= 0.0) return c;
  const int d = static_cast<int>(c.size());
  const double theta = 2.0 * std::asin(std::min(1.0, chord / 2.0));
  std::vector<double> out(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i)
    out[i] = std::cos(theta) * c[i] + std::sin(theta) * w[i];
  return out;
}

}  // namespace

SynthResult generate(const SynthConfig& cfg) {
  cfg.validate();
  const int T = cfg.rollout_len;
  const double chord = cfg.separation * cfg.noise_sigma;

  SynthResult result;
  SynthMeta& meta = result.meta;

  Rng geo_rng(derive_seed(cfg.seed, 0x6e0));
  meta.fail_center = geo_rng.unit_vector(cfg.feat_dim);
  // Task centers sit on the unit sphere at exact chord distance from the
  // shared failure center; their offset directions share a cone so the
  // success regions of different tasks stay mutually reachable while the
  // failure zone keeps its own side of the sphere.
  std::vector<double> cone_axis = orthogonal_dir(meta.fail_center, geo_rng);
  std::vector<std::vector<double>> centers(static_cast<std::size_t>(cfg.n_tasks));
  std::vector<std::vector<double>> fail_centers(
      static_cast<std::size_t>(cfg.n_tasks));
  for (int k = 0; k < cfg.n_tasks; ++k) {
    std::vector<double> jitter = orthogonal_dir(meta.fail_center, geo_rng);
    std::vector<double> dir(static_cast<std::size_t>(cfg.feat_dim));
    double norm2 = 0.0;
    for (int i = 0; i < cfg.feat_dim; ++i) {
      dir[static_cast<std::size_t>(i)] =
          cone_axis[static_cast<std::size_t>(i)] +
          cfg.task_spread * jitter[static_cast<std::size_t>(i)];
      norm2 += dir[static_cast<std::size_t>(i)] * dir[static_cast<std::size_t>(i)];
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : dir) x *= inv;
    centers[static_cast<std::size_t>(k)] =
        sphere_offset(meta.fail_center, chord, dir);
    meta.task_centers[task_name(k)] = centers[static_cast<std::size_t>(k)];
    if (cfg.per_task_failure_zone) {
      // negative control: each task drifts toward its own private zone
      const auto& c = centers[static_cast<std::size_t>(k)];
      fail_centers[static_cast<std::size_t>(k)] =
          sphere_offset(c, chord, orthogonal_dir(c, geo_rng));
      meta.task_fail_centers[task_name(k)] =
          fail_centers[static_cast<std::size_t>(k)];
    } else {
      fail_centers[static_cast<std::size_t>(k)] = meta.fail_center;
    }
  }

  std::vector<Rollout> rollouts;
  rollouts.reserve(static_cast<std::size_t>(cfg.n_tasks) *
                   cfg.rollouts_per_task);
  const int n_fail = std::clamp(
      static_cast<int>(std::lround(cfg.fail_rate * cfg.rollouts_per_task)), 1,
      cfg.rollouts_per_task - 1);

  for (int k = 0; k < cfg.n_tasks; ++k) {
    // which rollouts of this task fail
    std::vector<int> idx(static_cast<std::size_t>(cfg.rollouts_per_task));
    std::iota(idx.begin(), idx.end(), 0);
    Rng label_rng(derive_seed(cfg.seed, 0x1ab, static_cast<std::uint64_t>(k)));
    label_rng.shuffle(idx);
    std::vector<bool> fails(static_cast<std::size_t>(cfg.rollouts_per_task),
                            false);
    for (int i = 0; i < n_fail; ++i)
      fails[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])] = true;

    for (int r = 0; r < cfg.rollouts_per_task; ++r) {
      Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(k) * 100003ULL,
                          static_cast<std::uint64_t>(r)));
      Rollout ro;
      ro.rollout_id = rollout_name(k, r);
      ro.task_id = task_name(k);
      ro.label = fails[static_cast<std::size_t>(r)] ? 1 : 0;
      ro.replan_stride = cfg.with_action_samples ? cfg.replan_stride : 1;
      ro.steps.resize(static_cast<std::size_t>(T));

      int onset = T;  // never, for successes
      const int drift_len = std::max(1, static_cast<int>(std::lround(0.1 * T)));
      if (ro.label == 1) {
        const double u = rng.uniform(cfg.onset_lo, cfg.onset_hi);
        onset = std::clamp(static_cast<int>(std::floor(u * T)), 0, T - 1);
        meta.onset_step[ro.rollout_id] = onset;
        meta.onset_rel[ro.rollout_id] =
            (static_cast<double>(onset) + 1.0) / static_cast<double>(T);
      }
      const auto& c_task = centers[static_cast<std::size_t>(k)];
      const auto& c_fail = fail_centers[static_cast<std::size_t>(k)];

      // sinusoidal base trajectory for action chunks
      std::vector<double> amp, omega, phase;
      if (cfg.with_action_samples) {
        for (int j = 0; j < cfg.action_dim; ++j) {
          amp.push_back(rng.uniform(0.5, 1.0));
          omega.push_back(rng.uniform(0.05, 0.2));
          phase.push_back(rng.uniform(0.0, 2.0 * M_PI));
        }
      }
      auto base_action = [&](double t_abs, int j) {
        return amp[static_cast<std::size_t>(j)] *
               std::sin(omega[static_cast<std::size_t>(j)] * t_abs +
                        phase[static_cast<std::size_t>(j)]);
      };

      for (int t = 0; t < T; ++t) {
        RolloutStep& step = ro.steps[static_cast<std::size_t>(t)];
        const bool failing = ro.label == 1 && t >= onset;
        std::vector<double> mean = c_task;
        if (failing) {
          const double frac =
              std::min(1.0, static_cast<double>(t - onset + 1) / drift_len);
          mean = lerp(c_task, c_fail, frac);
        }

        EmbeddingTensor& emb = step.embedding;
        emb.feat = cfg.feat_dim;
        if (cfg.embedding_layout == "flow") {
          emb.layout = EmbeddingLayout::HoriDiffFeat;
          emb.hori = cfg.flow_hori;
          emb.diff = cfg.flow_diff;
          emb.data.resize(emb.expected_size());
          for (std::size_t cell = 0;
               cell < static_cast<std::size_t>(emb.hori) * emb.diff; ++cell)
            for (int f = 0; f < cfg.feat_dim; ++f)
              emb.data[cell * cfg.feat_dim + f] =
                  mean[static_cast<std::size_t>(f)] +
                  cfg.noise_sigma * rng.normal();
        } else {
          emb.layout = EmbeddingLayout::TokenFeat;
          emb.rows = cfg.embedding_rows;
          emb.data.resize(emb.expected_size());
          for (int row = 0; row < emb.rows; ++row)
            for (int f = 0; f < cfg.feat_dim; ++f)
              emb.data[static_cast<std::size_t>(row) * cfg.feat_dim + f] =
                  mean[static_cast<std::size_t>(f)] +
                  cfg.noise_sigma * rng.normal();
        }

        if (cfg.with_tokens) {
          const double rho = failing ? cfg.token_failure_corr : 0.0;
          std::vector<double> probs(static_cast<std::size_t>(cfg.token_count));
          std::vector<double> ents(static_cast<std::size_t>(cfg.token_count));
          const double lo_p = std::max(0.05, 0.3 - 0.25 * rho);
          const double hi_p = 1.0 - 0.6 * rho;
          for (int m = 0; m < cfg.token_count; ++m) {
            probs[static_cast<std::size_t>(m)] = rng.uniform(lo_p, hi_p);
            ents[static_cast<std::size_t>(m)] =
                rng.uniform(0.05, 1.2) + rho * rng.uniform(0.3, 0.8);
          }
          step.token_probs = std::move(probs);
          step.token_entropies = std::move(ents);
        }

        if (cfg.with_action_samples) {
          const double t_abs = static_cast<double>(t) * cfg.replan_stride;
          const double sigma_a = failing ? 2.0 * kActionNoise : kActionNoise;
          Eigen::MatrixXd chunk(cfg.chunk_horizon, cfg.action_dim);
          for (int l = 0; l < cfg.chunk_horizon; ++l)
            for (int j = 0; j < cfg.action_dim; ++j)
              chunk(l, j) = base_action(t_abs + l, j);
          if (failing) {
            // per-decision offset: consecutive chunks stop agreeing on
            // their overlap once the policy derails
            for (int j = 0; j < cfg.action_dim; ++j) {
              const double off = 4.0 * kActionNoise * rng.normal();
              chunk.col(j).array() += off;
            }
          }
          std::vector<Eigen::MatrixXd> samples;
          samples.reserve(static_cast<std::size_t>(cfg.samples_per_step));
          for (int s = 0; s < cfg.samples_per_step; ++s) {
            Eigen::MatrixXd m = chunk;
            for (int l = 0; l < cfg.chunk_horizon; ++l)
              for (int j = 0; j < cfg.action_dim; ++j)
                m(l, j) += sigma_a * rng.normal();
            samples.push_back(std::move(m));
          }
          step.action_chunk = std::move(chunk);
          step.action_samples = std::move(samples);
        }
      }
      rollouts.push_back(std::move(ro));
    }
  }

  result.dataset = Dataset(std::move(rollouts));
  return result;
}

// ---- JSON ----

namespace {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

SynthConfig synth_config_from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Format, std::string("bad synth config: ") + e.what());
  }
  SynthConfig cfg;
  try {
    read_field(j, "n_tasks", cfg.n_tasks);
    read_field(j, "n_unseen_tasks", cfg.n_unseen_tasks);
    read_field(j, "rollouts_per_task", cfg.rollouts_per_task);
    read_field(j, "fail_rate", cfg.fail_rate);
    read_field(j, "feat_dim", cfg.feat_dim);
    read_field(j, "rollout_len", cfg.rollout_len);
    read_field(j, "separation", cfg.separation);
    read_field(j, "noise_sigma", cfg.noise_sigma);
    read_field(j, "task_spread", cfg.task_spread);
    if (j.contains("failure_onset")) {
      const auto& fo = j.at("failure_onset");
      require(fo.is_array() && fo.size() == 2, ErrorCode::Format,
              "failure_onset must be [lo, hi]");
      cfg.onset_lo = fo[0].get<double>();
      cfg.onset_hi = fo[1].get<double>();
    }
    read_field(j, "embedding_rows", cfg.embedding_rows);
    read_field(j, "embedding_layout", cfg.embedding_layout);
    read_field(j, "flow_hori", cfg.flow_hori);
    read_field(j, "flow_diff", cfg.flow_diff);
    read_field(j, "with_tokens", cfg.with_tokens);
    read_field(j, "token_count", cfg.token_count);
    read_field(j, "token_failure_corr", cfg.token_failure_corr);
    read_field(j, "with_action_samples", cfg.with_action_samples);
    read_field(j, "samples_per_step", cfg.samples_per_step);
    read_field(j, "chunk_horizon", cfg.chunk_horizon);
    read_field(j, "replan_stride", cfg.replan_stride);
    read_field(j, "action_dim", cfg.action_dim);
    read_field(j, "per_task_failure_zone", cfg.per_task_failure_zone);
    read_field(j, "seed", cfg.seed);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Format, std::string("bad synth config field: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::string synth_config_to_json_text(const SynthConfig& cfg) {
  nlohmann::json j;
  j["n_tasks"] = cfg.n_tasks;
  j["n_unseen_tasks"] = cfg.n_unseen_tasks;
  j["rollouts_per_task"] = cfg.rollouts_per_task;
  j["fail_rate"] = cfg.fail_rate;
  j["feat_dim"] = cfg.feat_dim;
  j["rollout_len"] = cfg.rollout_len;
  j["separation"] = cfg.separation;
  j["noise_sigma"] = cfg.noise_sigma;
  j["task_spread"] = cfg.task_spread;
  j["failure_onset"] = {cfg.onset_lo, cfg.onset_hi};
  j["embedding_rows"] = cfg.embedding_rows;
  j["embedding_layout"] = cfg.embedding_layout;
  j["flow_hori"] = cfg.flow_hori;
  j["flow_diff"] = cfg.flow_diff;
  j["with_tokens"] = cfg.with_tokens;
  j["token_count"] = cfg.token_count;
  j["token_failure_corr"] = cfg.token_failure_corr;
  j["with_action_samples"] = cfg.with_action_samples;
  j["samples_per_step"] = cfg.samples_per_step;
  j["chunk_horizon"] = cfg.chunk_horizon;
  j["replan_stride"] = cfg.replan_stride;
  j["action_dim"] = cfg.action_dim;
  j["per_task_failure_zone"] = cfg.per_task_failure_zone;
  j["seed"] = cfg.seed;
  return j.dump(2) + "\n";
}

std::string synth_meta_to_json_text(const SynthMeta& meta) {
  nlohmann::json j;
  j["onset_step"] = meta.onset_step;
  j["onset_rel"] = meta.onset_rel;
  j["task_centers"] = meta.task_centers;
  j["fail_center"] = meta.fail_center;
  if (!meta.task_fail_centers.empty())
    j["task_fail_centers"] = meta.task_fail_centers;
  return j.dump(2) + "\n";
}

}  // namespace vigil
