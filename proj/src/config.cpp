#include "metassm/config.hpp"

#include <fstream>
#include <set>

namespace metassm::cfg {

using json = nlohmann::json;

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open config " + path);
  ExperimentConfig c;
  c.raw = json::parse(f);
  (void)c.benchmark();
  (void)c.seed();
  return c;
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  ExperimentConfig c;
  c.raw = json::parse(text);
  return c;
}

std::string ExperimentConfig::canonical() const { return raw.dump(2) + "\n"; }

std::string ExperimentConfig::benchmark() const {
  const auto b = raw.at("benchmark").get<std::string>();
  static const std::set<std::string> known = {"boucwen", "vdp", "localization",
                                              "synthetic-cone"};
  if (!known.count(b)) throw Error("config: unknown benchmark '" + b + "'");
  return b;
}

uint64_t ExperimentConfig::seed() const {
  if (!raw.contains("seed")) throw Error("config: seed is mandatory");
  return raw.at("seed").get<uint64_t>();
}

std::string ExperimentConfig::out_dir() const { return raw.value("out_dir", "out"); }

const json& ExperimentConfig::section(const std::string& key) const {
  if (!raw.contains(key)) throw Error("config: missing section '" + key + "'");
  return raw.at(key);
}

bool ExperimentConfig::is_case1() const {
  return section("model").value("case", 1) == 1;
}

namespace {

std::vector<int> int_list(const json& j) {
  std::vector<int> v;
  for (const auto& e : j) v.push_back(e.get<int>());
  return v;
}

}  // namespace

ad::Array json_matrix(const json& j) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw Error("config: expected a dense row-major matrix (array of arrays)");
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j[0].size());
  ad::Array m({rows, cols});
  for (int r = 0; r < rows; ++r) {
    if (static_cast<int>(j[static_cast<std::size_t>(r)].size()) != cols)
      throw Error("config: ragged matrix rows");
    for (int c = 0; c < cols; ++c)
      m.at(r, c) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

nssm::Case1Config ExperimentConfig::case1(const nssm::Normalizer& norm) const {
  const json& m = section("model");
  nssm::Case1Config c;
  c.nu = m.value("nu", 0);
  c.ny = m.at("ny").get<int>();
  c.H = m.at("H").get<int>();
  c.Hp = m.at("Hp").get<int>();
  c.npsi = m.at("npsi").get<int>();
  c.enc_hidden = int_list(m.value("enc_hidden", json::array()));
  c.trans_hidden = int_list(m.value("trans_hidden", json::array()));
  c.dec_hidden = int_list(m.value("dec_hidden", json::array()));
  c.act = nn::parse_activation(m.value("activation", "swish"));
  c.norm = norm;
  return c;
}

nssm::Case2Config ExperimentConfig::case2(const nssm::Normalizer& norm) const {
  const json& m = section("model");
  nssm::Case2Config c;
  c.nx = m.at("nx").get<int>();
  c.nu = m.value("nu", 0);
  c.ny = m.at("ny").get<int>();
  c.npsi = m.at("npsi").get<int>();
  c.NS = m.value("NS", m.value("Hp", 1));
  c.enc_hidden = int_list(m.value("enc_hidden", json::array()));
  c.trans_hidden = int_list(m.value("trans_hidden", json::array()));
  c.decx_hidden = int_list(m.value("decx_hidden", json::array()));
  c.decy_hidden = int_list(m.value("decy_hidden", json::array()));
  c.act = nn::parse_activation(m.value("activation", "swish"));
  c.norm = norm;
  const std::string px = m.value("px", "none");
  const std::string py = m.value("py", "none");
  if (px == "conic") {
    c.px = nssm::StateConstraint::Conic;
    phys::ConicConstraint cc;
    cc.G = json_matrix(m.at("G"));
    cc.R = json_matrix(m.at("R"));
    c.conic = std::move(cc);
  } else if (px != "none") {
    throw Error("config: unknown px constraint '" + px + "'");
  }
  if (py == "curlfree") {
    c.py = nssm::OutputConstraint::CurlFree;
    c.curl.coords = int_list(m.at("curl_coords"));
  } else if (py != "none") {
    throw Error("config: unknown py constraint '" + py + "'");
  }
  return c;
}

meta::MetaConfig ExperimentConfig::meta() const {
  const json& m = section("meta");
  meta::MetaConfig c;
  c.algorithm = meta::parse_algorithm(m.value("algorithm", "maml"));
  c.beta_in = m.value("beta_in", 0.01);
  c.beta_out = m.value("beta_out", 0.001);
  c.M = m.value("M", 1);
  c.B = m.value("B", 4);
  c.inner_mask = nn::Mask::parse(m.value("inner_mask", "*"));
  c.epochs = m.value("epochs", 100);
  c.val_fraction = m.value("val_fraction", 0.2);
  c.seed = seed();
  c.adam_outer = m.value("adam_outer", false);
  c.clip_norm = m.value("clip_norm", 10.0);
  c.context_size = m.value("context_size", 0);
  c.target_size = m.value("target_size", 0);
  c.max_windows = m.value("max_windows", 0);
  return c;
}

double ExperimentConfig::adapt_fraction() const {
  if (!raw.contains("adapt")) return 0.2;
  return raw.at("adapt").value("fraction", 0.2);
}

int ExperimentConfig::adapt_steps() const {
  if (!raw.contains("adapt")) return meta().M;
  return raw.at("adapt").value("M", meta().M);
}

}  // namespace metassm::cfg
