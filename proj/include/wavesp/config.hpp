#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "wavesp/backbone.hpp"
#include "wavesp/data.hpp"
#include "wavesp/ssm.hpp"
#include "wavesp/wavelet.hpp"

namespace wavesp {

struct DataConfig {
  std::string manifest;  // corpus manifest path; wav paths are relative to it
  double chunk_seconds = 4.0;
  uint64_t frontend_seed = 7;
};

// Everything a run needs. Parsed from a flat `key = value` file with
// [section] headers; unknown sections or keys are hard errors.
struct ExperimentConfig {
  Variant variant = Variant::kPartialWSPT;
  int p = 10;
  int m = 4;
  double rho = 0.1;
  bool filter_learnable = true;
  FilterFamily filter_family = FilterFamily::kHaar;
  AblationMode ablation = AblationMode::kFull;
  double lr = 5e-4;
  int batch = 16;
  double dropout = 0.1;
  int max_epochs = 100;
  int patience = 7;
  uint64_t seed = 42;
  double lambda_pr = 0.0;

  EncoderConfig encoder;
  ClassifierConfig classifier;
  DataConfig data;
  CorpusSpec corpus;

  void validate() const {
    check_arg(p >= 1, "config: p must be >= 1");
    check_arg(m >= 0 && m <= p, "config: m must satisfy 0 <= m <= p");
    check_arg(rho >= 0.0 && rho <= 1.0, "config: rho must lie in [0,1]");
    check_arg(lr > 0.0, "config: lr must be positive");
    check_arg(batch >= 1, "config: batch must be >= 1");
    check_arg(dropout >= 0.0 && dropout < 1.0, "config: dropout must be in [0,1)");
    check_arg(max_epochs >= 1, "config: max_epochs must be >= 1");
    check_arg(patience >= 1, "config: patience must be >= 1");
    check_arg(data.chunk_seconds > 0.0, "config: chunk_seconds must be positive");
    encoder.validate();
    classifier.validate();
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (...) {
    throw std::invalid_argument("config: bad numeric value '" + v + "' for " + key);
  }
}

inline long long parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    long long i = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return i;
  } catch (...) {
    throw std::invalid_argument("config: bad integer value '" + v + "' for " + key);
  }
}

}  // namespace detail

inline ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line, section = "run";
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      check_arg(line.back() == ']', "config line " + std::to_string(lineno) +
                                        ": malformed section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      check_arg(section == "run" || section == "encoder" || section == "classifier" ||
                    section == "data" || section == "corpus",
                "config line " + std::to_string(lineno) + ": unknown section [" +
                    section + "]");
      continue;
    }
    const size_t eq = line.find('=');
    check_arg(eq != std::string::npos,
              "config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    const std::string qual = section + "." + key;

    if (qual == "run.variant") cfg.variant = variant_from_name(val);
    else if (qual == "run.p") cfg.p = static_cast<int>(detail::parse_int(qual, val));
    else if (qual == "run.m") cfg.m = static_cast<int>(detail::parse_int(qual, val));
    else if (qual == "run.rho") cfg.rho = detail::parse_double(qual, val);
    else if (qual == "run.filter") {
      if (val == "learnable") cfg.filter_learnable = true;
      else if (val == "fixed") cfg.filter_learnable = false;
      else throw std::invalid_argument("config: filter must be learnable|fixed");
    } else if (qual == "run.family") cfg.filter_family = family_from_name(val);
    else if (qual == "run.ablation") cfg.ablation = ablation_from_name(val);
    else if (qual == "run.lr") cfg.lr = detail::parse_double(qual, val);
    else if (qual == "run.batch") cfg.batch = static_cast<int>(detail::parse_int(qual, val));
    else if (qual == "run.dropout") cfg.dropout = detail::parse_double(qual, val);
    else if (qual == "run.max_epochs") cfg.max_epochs = static_cast<int>(detail::parse_int(qual, val));
    else if (qual == "run.patience") cfg.patience = static_cast<int>(detail::parse_int(qual, val));
    else if (qual == "run.seed") cfg.seed = static_cast<uint64_t>(detail::parse_int(qual, val));
    else if (qual == "run.lambda_pr") cfg.lambda_pr = detail::parse_double(qual, val);
    else if (qual == "encoder.layers") cfg.encoder.layers = static_cast<int>(detail::parse_int(qual, val));
    else if (qual == "encoder.dim") cfg.encoder.d = static_cast<int>(detail::parse_int(qual, val));
    else if (qual == "encoder.heads") cfg.encoder.heads = static_cast<int>(detail::parse_int(qual, val));
    else if (qual == "encoder.ff") cfg.encoder.ff = static_cast<int>(detail::parse_int(qual, val));
    else if (qual == "encoder.seed") cfg.encoder.seed = static_cast<uint64_t>(detail::parse_int(qual, val));
    else if (qual == "classifier.blocks") cfg.classifier.blocks = static_cast<int>(detail::parse_int(qual, val));
    else if (qual == "classifier.d_state") cfg.classifier.d_state = static_cast<int>(detail::parse_int(qual, val));
    else if (qual == "classifier.d_model") cfg.classifier.d_model = static_cast<int>(detail::parse_int(qual, val));
    else if (qual == "data.manifest") cfg.data.manifest = val;
    else if (qual == "data.chunk_seconds") cfg.data.chunk_seconds = detail::parse_double(qual, val);
    else if (qual == "data.frontend_seed") cfg.data.frontend_seed = static_cast<uint64_t>(detail::parse_int(qual, val));
    else if (qual == "corpus.n_train") cfg.corpus.n_train = static_cast<int>(detail::parse_int(qual, val));
    else if (qual == "corpus.n_dev") cfg.corpus.n_dev = static_cast<int>(detail::parse_int(qual, val));
    else if (qual == "corpus.n_eval") cfg.corpus.n_eval = static_cast<int>(detail::parse_int(qual, val));
    else if (qual == "corpus.seed") cfg.corpus.seed = static_cast<uint64_t>(detail::parse_int(qual, val));
    else if (qual == "corpus.artifacts") cfg.corpus.artifact_kinds = detail::split_commas(val);
    else if (qual == "corpus.min_seconds") cfg.corpus.min_seconds = detail::parse_double(qual, val);
    else if (qual == "corpus.max_seconds") cfg.corpus.max_seconds = detail::parse_double(qual, val);
    else
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": unknown key '" + key + "' in section [" +
                                  section + "]");
  }
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

// Canonical serialization; parse_config(serialize_config(c)) reproduces c.
inline std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream o;
  char buf[64];
  auto num = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  o << "[run]\n";
  o << "variant = " << variant_name(cfg.variant) << "\n";
  o << "p = " << cfg.p << "\n";
  o << "m = " << cfg.m << "\n";
  o << "rho = " << num(cfg.rho) << "\n";
  o << "filter = " << (cfg.filter_learnable ? "learnable" : "fixed") << "\n";
  o << "family = " << family_name(cfg.filter_family) << "\n";
  o << "ablation = " << ablation_name(cfg.ablation) << "\n";
  o << "lr = " << num(cfg.lr) << "\n";
  o << "batch = " << cfg.batch << "\n";
  o << "dropout = " << num(cfg.dropout) << "\n";
  o << "max_epochs = " << cfg.max_epochs << "\n";
  o << "patience = " << cfg.patience << "\n";
  o << "seed = " << cfg.seed << "\n";
  o << "lambda_pr = " << num(cfg.lambda_pr) << "\n";
  o << "[encoder]\n";
  o << "layers = " << cfg.encoder.layers << "\n";
  o << "dim = " << cfg.encoder.d << "\n";
  o << "heads = " << cfg.encoder.heads << "\n";
  o << "ff = " << cfg.encoder.ff << "\n";
  o << "seed = " << cfg.encoder.seed << "\n";
  o << "[classifier]\n";
  o << "blocks = " << cfg.classifier.blocks << "\n";
  o << "d_state = " << cfg.classifier.d_state << "\n";
  o << "d_model = " << cfg.classifier.d_model << "\n";
  o << "[data]\n";
  if (!cfg.data.manifest.empty()) o << "manifest = " << cfg.data.manifest << "\n";
  o << "chunk_seconds = " << num(cfg.data.chunk_seconds) << "\n";
  o << "frontend_seed = " << cfg.data.frontend_seed << "\n";
  o << "[corpus]\n";
  o << "n_train = " << cfg.corpus.n_train << "\n";
  o << "n_dev = " << cfg.corpus.n_dev << "\n";
  o << "n_eval = " << cfg.corpus.n_eval << "\n";
  o << "seed = " << cfg.corpus.seed << "\n";
  if (!cfg.corpus.artifact_kinds.empty()) {
    o << "artifacts = ";
    for (size_t i = 0; i < cfg.corpus.artifact_kinds.size(); ++i)
      o << (i ? "," : "") << cfg.corpus.artifact_kinds[i];
    o << "\n";
  } else {
    o << "artifacts =\n";
  }
  o << "min_seconds = " << num(cfg.corpus.min_seconds) << "\n";
  o << "max_seconds = " << num(cfg.corpus.max_seconds) << "\n";
  return o.str();
}

}  // namespace wavesp
