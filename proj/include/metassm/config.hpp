#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "metassm/meta.hpp"
#include "metassm/nssm.hpp"

namespace metassm::cfg {

// Experiment configuration backed by a JSON file. Canonical serialization
// (sorted keys, fixed indent) lets tests diff configs structurally.
struct ExperimentConfig {
  nlohmann::json raw;

  static ExperimentConfig load(const std::string& path);
  static ExperimentConfig parse(const std::string& text);
  std::string canonical() const;  // parse(canonical()) == raw

  std::string benchmark() const;  // boucwen | vdp | localization | synthetic-cone
  uint64_t seed() const;          // mandatory
  std::string out_dir() const;

  bool is_case1() const;
  nssm::Case1Config case1(const nssm::Normalizer& norm) const;
  nssm::Case2Config case2(const nssm::Normalizer& norm) const;
  meta::MetaConfig meta() const;

  // inference-time adaptation defaults
  double adapt_fraction() const;
  int adapt_steps() const;

  const nlohmann::json& section(const std::string& key) const;
};

ad::Array json_matrix(const nlohmann::json& j);  // [[row],[row],...]

}  // namespace metassm::cfg
