#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "simdim/common.hpp"
#include "simdim/decomp.hpp"
#include "simdim/entropy.hpp"
#include "simdim/measure.hpp"
#include "simdim/semigroup.hpp"

namespace simdim {

using Json = nlohmann::ordered_json;

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
}

inline void write_json_file(const std::filesystem::path& path, const Json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

// Manifest: config hash, seed, versions. Deliberately no timestamps or
// thread counts so outputs stay byte-identical across runs.
inline Json manifest_json(const std::string& command, const std::string& config_text, std::uint64_t seed,
                          std::size_t budget) {
  Json m;
  m["command"] = command;
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(fnv1a64(config_text)));
  m["config_hash"] = hash;
  m["seed"] = seed;
  m["budget"] = budget;
  m["versions"] = Json{{"simdim", "0.1.0"},
                       {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                     "." + std::to_string(EIGEN_MINOR_VERSION)}};
  return m;
}

inline Json separation_json(const SeparationReport& rep) {
  Json j;
  j["n_max"] = rep.n_max;
  Json deltas = Json::array();
  for (const auto& d : rep.delta) deltas.push_back(d ? Json(*d) : Json(nullptr));
  j["delta"] = deltas;
  Json ms = Json::array();
  for (const auto& m : rep.m) ms.push_back(m ? Json(*m) : Json(nullptr));
  j["m"] = ms;
  j["fitted_c"] = rep.fitted_c;
  j["condition_exponential"] = rep.condition_exponential;
  j["condition_weak"] = rep.condition_weak;
  j["eps_used"] = rep.eps_used;
  j["label"] = rep.label;
  return j;
}

inline Json dimension_report_json(const DimensionReport& rep) {
  Json j;
  j["scales"] = rep.scales;
  j["entropy_at_scale"] = rep.entropy_at_scale;
  j["stderr"] = rep.stderrs;
  j["slope"] = rep.slope;
  j["slope_stderr"] = rep.slope_stderr;
  if (!std::isnan(rep.predicted)) j["predicted"] = rep.predicted;
  j["verdict"] = rep.verdict;
  j["truncation_warning"] = rep.truncation_warning;
  return j;
}

inline std::string scale_ladder_csv(const DimensionReport& rep) {
  std::string csv = "r,H,stderr\n";
  for (std::size_t i = 0; i < rep.scales.size(); ++i)
    csv += format_double(rep.scales[i]) + "," + format_double(rep.entropy_at_scale[i]) + "," +
           format_double(rep.stderrs[i]) + "\n";
  return csv;
}

inline std::string gnuplot_dat(const DimensionReport& rep) {
  std::string dat = "# log(1/r)  H  stderr\n";
  for (std::size_t i = 0; i < rep.scales.size(); ++i)
    dat += format_double(std::log(1.0 / rep.scales[i])) + " " + format_double(rep.entropy_at_scale[i]) + " " +
           format_double(rep.stderrs[i]) + "\n";
  return dat;
}

inline std::string point_cloud_csv(const PointCloud& cloud, std::uint64_t seed, const std::string& stop_rule) {
  std::string csv = "# d=" + std::to_string(cloud.d) + " count=" + std::to_string(cloud.size()) +
                    " seed=" + std::to_string(seed) + " stop=" + stop_rule + "\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (int k = 0; k < cloud.d; ++k) {
      if (k) csv += ",";
      csv += format_double(cloud.point(i)[k]);
    }
    csv += "\n";
  }
  return csv;
}

}  // namespace simdim
