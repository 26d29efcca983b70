#ifndef VIGIL_IO_HPP
#define VIGIL_IO_HPP

#include <string>
#include <vector>

#include "vigil/conformal.hpp"
#include "vigil/trace.hpp"

namespace vigil {

// One .jsonl file per rollout: a header object line followed by one record
// line per step. Reals round-trip at full precision.
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

std::string rollout_to_jsonl(const Rollout& r);
Rollout rollout_from_jsonl(const std::string& text, const std::string& origin);

// Band files: alpha, horizon, q and the mu/modulation arrays.
std::string band_to_json_text(const ConformalBand& band);
ConformalBand band_from_json_text(const std::string& text);
void save_band(const ConformalBand& band, const std::string& path);
ConformalBand load_band(const std::string& path);

// Small text helpers shared by the report writers.
std::string format_double(double v);  // shortest round-trip decimal
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);
std::string csv_line(const std::vector<std::string>& fields);

}  // namespace vigil

#endif
