#include "vigil/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "vigil/error.hpp"

namespace vigil {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- small text helpers ----

std::string format_double(double v) {
  // json's dtoa produces the shortest text that parses back exactly
  return json(v).dump();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << content;
  require(out.good(), ErrorCode::Io, "write failed for '" + path + "'");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::Io, "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string csv_line(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    const std::string& f = fields[i];
    if (f.find_first_of(",\"\n") != std::string::npos) {
      out += '"';
      for (char c : f) {
        if (c == '"') out += '"';
        out += c;
      }
      out += '"';
    } else {
      out += f;
    }
  }
  out += '\n';
  return out;
}

// ---- rollout files ----

namespace {

json embedding_header(const EmbeddingTensor& e) {
  json j;
  switch (e.layout) {
    case EmbeddingLayout::None:
      j["layout"] = "none";
      break;
    case EmbeddingLayout::TokenFeat:
      j["layout"] = "token_feat";
      j["rows"] = e.rows;
      j["feat"] = e.feat;
      break;
    case EmbeddingLayout::HoriDiffFeat:
      j["layout"] = "hori_diff_feat";
      j["hori"] = e.hori;
      j["diff"] = e.diff;
      j["feat"] = e.feat;
      break;
  }
  return j;
}

std::vector<double> flat(const Eigen::MatrixXd& m) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (long r = 0; r < m.rows(); ++r)
    for (long c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  return out;
}

Eigen::MatrixXd unflat(const std::vector<double>& v, long rows, long cols) {
  Eigen::MatrixXd m(rows, cols);
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c)
      m(r, c) = v[static_cast<std::size_t>(r * cols + c)];
  return m;
}

}  // namespace

std::string rollout_to_jsonl(const Rollout& r) {
  validate_rollout(r);
  const RolloutStep& first = r.steps.front();

  json header;
  header["rollout_id"] = r.rollout_id;
  header["task_id"] = r.task_id;
  header["label"] = r.label;
  header["replan_stride"] = r.replan_stride;
  header["steps"] = r.steps.size();
  header["embedding"] = embedding_header(first.embedding);
  if (first.token_probs) header["token_count"] = first.token_probs->size();
  if (first.token_entropies)
    header["token_entropy_count"] = first.token_entropies->size();
  if (first.action_chunk)
    header["action_chunk"] = {first.action_chunk->rows(),
                              first.action_chunk->cols()};
  if (first.action_samples)
    header["action_samples"] = {first.action_samples->size(),
                                first.action_samples->front().rows(),
                                first.action_samples->front().cols()};

  std::string out = header.dump() + "\n";
  for (const RolloutStep& s : r.steps) {
    json step;
    if (!s.embedding.empty()) step["embedding"] = s.embedding.data;
    if (s.token_probs) step["token_probs"] = *s.token_probs;
    if (s.token_entropies) step["token_entropies"] = *s.token_entropies;
    if (s.action_chunk) step["action_chunk"] = flat(*s.action_chunk);
    if (s.action_samples) {
      std::vector<double> all;
      for (const Eigen::MatrixXd& m : *s.action_samples) {
        std::vector<double> f = flat(m);
        all.insert(all.end(), f.begin(), f.end());
      }
      step["action_samples"] = all;
    }
    if (s.observation_ref) step["observation_ref"] = *s.observation_ref;
    out += step.dump() + "\n";
  }
  return out;
}

Rollout rollout_from_jsonl(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::Format,
          origin + ": empty file");

  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, origin + ": bad header: " + e.what());
  }

  Rollout r;
  EmbeddingTensor shape;
  std::size_t n_steps = 0;
  std::size_t token_count = 0, entropy_count = 0;
  long chunk_h = 0, chunk_a = 0;
  std::size_t n_samples = 0;
  long sample_h = 0, sample_a = 0;
  try {
    r.rollout_id = header.at("rollout_id").get<std::string>();
    r.task_id = header.at("task_id").get<std::string>();
    r.label = header.at("label").get<int>();
    r.replan_stride = header.at("replan_stride").get<int>();
    n_steps = header.at("steps").get<std::size_t>();
    const json& e = header.at("embedding");
    const std::string layout = e.at("layout").get<std::string>();
    if (layout == "token_feat") {
      shape.layout = EmbeddingLayout::TokenFeat;
      shape.rows = e.at("rows").get<int>();
      shape.feat = e.at("feat").get<int>();
    } else if (layout == "hori_diff_feat") {
      shape.layout = EmbeddingLayout::HoriDiffFeat;
      shape.hori = e.at("hori").get<int>();
      shape.diff = e.at("diff").get<int>();
      shape.feat = e.at("feat").get<int>();
    } else if (layout == "none") {
      shape.layout = EmbeddingLayout::None;
    } else {
      fail(ErrorCode::Format, origin + ": unknown embedding layout '" + layout + "'");
    }
    if (header.contains("token_count"))
      token_count = header.at("token_count").get<std::size_t>();
    if (header.contains("token_entropy_count"))
      entropy_count = header.at("token_entropy_count").get<std::size_t>();
    if (header.contains("action_chunk")) {
      chunk_h = header.at("action_chunk").at(0).get<long>();
      chunk_a = header.at("action_chunk").at(1).get<long>();
    }
    if (header.contains("action_samples")) {
      n_samples = header.at("action_samples").at(0).get<std::size_t>();
      sample_h = header.at("action_samples").at(1).get<long>();
      sample_a = header.at("action_samples").at(2).get<long>();
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, origin + ": bad header field: " + e.what());
  }

  std::size_t step_idx = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::string at = origin + ": step " + std::to_string(step_idx);
    json sj;
    try {
      sj = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorCode::Format, at + ": bad record: " + e.what());
    }
    RolloutStep step;
    try {
      if (shape.layout != EmbeddingLayout::None) {
        require(sj.contains("embedding"), ErrorCode::Format,
                at + ": missing embedding");
        step.embedding = shape;
        step.embedding.data = sj.at("embedding").get<std::vector<double>>();
        require(step.embedding.data.size() == shape.expected_size(),
                ErrorCode::Format,
                at + ": embedding length " +
                    std::to_string(step.embedding.data.size()) +
                    " does not match declared shape");
      }
      if (token_count > 0) {
        require(sj.contains("token_probs"), ErrorCode::Format,
                at + ": missing token_probs");
        step.token_probs = sj.at("token_probs").get<std::vector<double>>();
        require(step.token_probs->size() == token_count, ErrorCode::Format,
                at + ": token_probs length " +
                    std::to_string(step.token_probs->size()) +
                    " does not match declared token_count " +
                    std::to_string(token_count));
      }
      if (entropy_count > 0) {
        require(sj.contains("token_entropies"), ErrorCode::Format,
                at + ": missing token_entropies");
        step.token_entropies =
            sj.at("token_entropies").get<std::vector<double>>();
        require(step.token_entropies->size() == entropy_count,
                ErrorCode::Format, at + ": token_entropies length mismatch");
      }
      if (chunk_h > 0) {
        require(sj.contains("action_chunk"), ErrorCode::Format,
                at + ": missing action_chunk");
        auto v = sj.at("action_chunk").get<std::vector<double>>();
        require(v.size() == static_cast<std::size_t>(chunk_h * chunk_a),
                ErrorCode::Format, at + ": action_chunk length mismatch");
        step.action_chunk = unflat(v, chunk_h, chunk_a);
      }
      if (n_samples > 0) {
        require(sj.contains("action_samples"), ErrorCode::Format,
                at + ": missing action_samples");
        auto v = sj.at("action_samples").get<std::vector<double>>();
        const std::size_t per = static_cast<std::size_t>(sample_h * sample_a);
        require(v.size() == n_samples * per, ErrorCode::Format,
                at + ": action_samples length mismatch");
        std::vector<Eigen::MatrixXd> samples;
        samples.reserve(n_samples);
        for (std::size_t s = 0; s < n_samples; ++s) {
          std::vector<double> one(v.begin() + static_cast<long>(s * per),
                                  v.begin() + static_cast<long>((s + 1) * per));
          samples.push_back(unflat(one, sample_h, sample_a));
        }
        step.action_samples = std::move(samples);
      }
      if (sj.contains("observation_ref"))
        step.observation_ref = sj.at("observation_ref").get<std::string>();
    } catch (const json::exception& e) {
      fail(ErrorCode::Format, at + ": " + e.what());
    }
    r.steps.push_back(std::move(step));
    ++step_idx;
  }
  require(r.steps.size() == n_steps, ErrorCode::Format,
          origin + ": header declares " + std::to_string(n_steps) +
              " steps, file has " + std::to_string(r.steps.size()));
  validate_rollout(r);
  return r;
}

namespace {

void check_file_safe_id(const std::string& id) {
  require(!id.empty(), ErrorCode::InvalidArgument, "empty rollout_id");
  for (char c : id)
    require(std::isalnum(static_cast<unsigned char>(c)) || c == '_' ||
                c == '-' || c == '.',
            ErrorCode::InvalidArgument,
            "rollout_id '" + id + "' is not filename-safe");
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& dir) {
  require(ds.size() > 0, ErrorCode::InvalidArgument, "refusing to save an empty dataset");
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorCode::Io, "cannot create directory '" + dir + "'");
  for (const Rollout& r : ds.rollouts()) {
    check_file_safe_id(r.rollout_id);
    write_text_file((fs::path(dir) / (r.rollout_id + ".jsonl")).string(),
                    rollout_to_jsonl(r));
  }
}

Dataset load_dataset(const std::string& dir) {
  require(fs::is_directory(dir), ErrorCode::Io,
          "'" + dir + "' is not a directory");
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl")
      files.push_back(entry.path().string());
  }
  require(!files.empty(), ErrorCode::Io,
          "no rollout files (*.jsonl) in '" + dir + "'");
  std::sort(files.begin(), files.end());
  std::vector<Rollout> rollouts;
  rollouts.reserve(files.size());
  for (const std::string& f : files)
    rollouts.push_back(rollout_from_jsonl(read_text_file(f),
                                          fs::path(f).filename().string()));
  return Dataset(std::move(rollouts));
}

// ---- band files ----

std::string band_to_json_text(const ConformalBand& band) {
  json j;
  j["format"] = "vigil-band";
  j["alpha"] = band.alpha;
  j["horizon"] = band.horizon;
  if (std::isfinite(band.q))
    j["q"] = band.q;
  else
    j["q"] = "inf";
  j["mu"] = band.mu;
  j["modulation"] = band.modulation;
  return j.dump(2) + "\n";
}

ConformalBand band_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, std::string("bad band file: ") + e.what());
  }
  ConformalBand band;
  try {
    require(j.at("format").get<std::string>() == "vigil-band",
            ErrorCode::Format, "not a band file");
    band.alpha = j.at("alpha").get<double>();
    band.horizon = j.at("horizon").get<std::size_t>();
    if (j.at("q").is_string())
      band.q = std::numeric_limits<double>::infinity();
    else
      band.q = j.at("q").get<double>();
    band.mu = j.at("mu").get<std::vector<double>>();
    band.modulation = j.at("modulation").get<std::vector<double>>();
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, std::string("bad band field: ") + e.what());
  }
  require(band.mu.size() == band.horizon &&
              band.modulation.size() == band.horizon,
          ErrorCode::Format, "band arrays do not match the horizon");
  return band;
}

void save_band(const ConformalBand& band, const std::string& path) {
  write_text_file(path, band_to_json_text(band));
}

ConformalBand load_band(const std::string& path) {
  return band_from_json_text(read_text_file(path));
}

}  // namespace vigil
