#ifndef VIGIL_SYNTH_HPP
#define VIGIL_SYNTH_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vigil/trace.hpp"

namespace vigil {

// Deterministic rollout generator. Task centers sit on the unit sphere at a
// fixed chord distance (separation * noise_sigma) from one shared failure
// center; failed rollouts drift from their task center into that zone after
// a random onset time and stay there.
struct SynthConfig {
  int n_tasks = 5;
  int n_unseen_tasks = 2;
  int rollouts_per_task = 40;
  double fail_rate = 0.5;
  int feat_dim = 32;
  int rollout_len = 60;           // decision steps per rollout
  double separation = 6.0;        // distance to the failure zone, in sigmas
  double noise_sigma = 0.1;
  double task_spread = 0.5;       // cone width of task-center directions
  double onset_lo = 0.3;          // failure onset range, relative time
  double onset_hi = 0.6;
  int embedding_rows = 1;         // token positions in the raw feature matrix
  std::string embedding_layout = "token";  // token | flow
  int flow_hori = 2;              // raw tensor axes when layout == flow
  int flow_diff = 2;
  bool with_tokens = false;
  int token_count = 8;
  double token_failure_corr = 0.0;  // 0 = tokens carry no failure signal
  bool with_action_samples = false;
  int samples_per_step = 10;      // K
  int chunk_horizon = 8;          // H
  int replan_stride = 4;          // H'
  int action_dim = 7;             // a
  bool per_task_failure_zone = false;  // negative control: no shared zone
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthMeta {
  std::map<std::string, int> onset_step;       // failed rollouts only
  std::map<std::string, double> onset_rel;     // (onset_step + 1) / T
  std::map<std::string, std::vector<double>> task_centers;
  std::vector<double> fail_center;             // shared zone
  std::map<std::string, std::vector<double>> task_fail_centers;  // per-task mode
};

struct SynthResult {
  Dataset dataset;
  SynthMeta meta;
};

SynthResult generate(const SynthConfig& cfg);

// Config files mirror the field names above.
SynthConfig synth_config_from_json_text(const std::string& text);
std::string synth_config_to_json_text(const SynthConfig& cfg);
std::string synth_meta_to_json_text(const SynthMeta& meta);

}  // namespace vigil

#endif
