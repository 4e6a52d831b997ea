/*
 * Copyright 2026 The fbloop Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
// fbloop command-line interface. Links only against the C API.

#include <openssl/evp.h>
#include <unistd.h>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "fbloop/fbloop.h"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Failure carrying the process exit code.
struct Failure : std::runtime_error {
  Failure(int code, const std::string& msg) : std::runtime_error(msg), code(code) {}
  int code;
};

int ExitCode(fbloop_status s) {
  switch (s) {
    case FBLOOP_OK: return 0;
    case FBLOOP_ERR_VALIDATION:
    case FBLOOP_ERR_DOMAIN:
    case FBLOOP_ERR_IO: return 1;
    default: return 2;
  }
}

void Check(fbloop_status s) {
  if (s != FBLOOP_OK) throw Failure(ExitCode(s), fbloop_last_error());
}

struct CFree {
  void operator()(char* p) const { fbloop_free(p); }
};
using CString = std::unique_ptr<char, CFree>;

struct LogFree {
  void operator()(fbloop_log* p) const { fbloop_log_free(p); }
};
struct LmFree {
  void operator()(fbloop_lm* p) const { fbloop_lm_free(p); }
};
using LogHandle = std::unique_ptr<fbloop_log, LogFree>;
using LmHandle = std::unique_ptr<fbloop_lm, LmFree>;

std::string Take(char* p) { return CString(p).get(); }

std::string Format(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure(1, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string Sha256(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Failure(2, "sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

// Writes via a temporary file in the same directory, then renames.
void AtomicWrite(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Failure(1, "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Failure(1, "write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

class Manifest {
 public:
  Manifest(std::string command, std::vector<std::string> argv)
      : command_(std::move(command)), argv_(std::move(argv)) {}

  void Config(json c) { config_ = std::move(c); }
  void Seed(const std::string& label, std::uint64_t seed) { seeds_[label] = seed; }

  std::string Input(const std::string& path) {
    std::string bytes = ReadFile(path);
    inputs_[path] = Sha256(bytes);
    return bytes;
  }

  void Output(const fs::path& path, const std::string& content) {
    AtomicWrite(path, content);
    outputs_.emplace_back(path, Sha256(content));
  }

  // Output keys are relative to out_dir so manifests compare across runs.
  void Write(const fs::path& out_dir) const {
    json outputs = json::object();
    for (const auto& [path, digest] : outputs_) {
      outputs[path.lexically_relative(out_dir).generic_string()] = digest;
    }
    json m = {{"command", command_},
              {"argv", argv_},
              {"config", config_},
              {"seeds", seeds_},
              {"inputs", inputs_},
              {"version", fbloop_version()},
              {"outputs", outputs}};
    AtomicWrite(out_dir / "manifest.json", m.dump(2) + "\n");
  }

 private:
  std::string command_;
  std::vector<std::string> argv_;
  json config_ = json::object();
  json seeds_ = json::object();
  json inputs_ = json::object();
  std::vector<std::pair<fs::path, std::string>> outputs_;
};

std::vector<double> ParseList(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    double v;
    auto res = std::from_chars(item.data(), item.data() + item.size(), v);
    if (res.ec != std::errc() || res.ptr != item.data() + item.size()) {
      throw Failure(1, "bad number `" + item + "` in list `" + text + "`");
    }
    out.push_back(v);
  }
  return out;
}

// Accepts "a,b,c" or "start:stop:step" (inclusive of stop).
std::vector<double> ParseGrid(const std::string& text) {
  if (text.find(':') == std::string::npos) return ParseList(text);
  std::string spec = text;
  for (char& c : spec) {
    if (c == ':') c = ',';
  }
  const auto parts = ParseList(spec);
  if (parts.size() != 3 || !(parts[2] > 0.0) || parts[1] < parts[0]) {
    throw Failure(1, "grid range must be start:stop:step with step > 0");
  }
  std::vector<double> out;
  const long n = std::lround(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9));
  for (long i = 0; i <= n; ++i) out.push_back(parts[0] + static_cast<double>(i) * parts[2]);
  return out;
}

std::string Percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f%%", 100.0 * v);
  return buf;
}

struct Common {
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

void AddCommon(CLI::App* app, Common& c, bool seeded) {
  app->add_option("--out-dir", c.out_dir, "Directory for outputs and manifest.json");
  if (seeded) app->add_option("--seed", c.seed, "Root seed for all randomness");
  app->add_option("--threads", c.threads, "Worker cap (0 = hardware concurrency)");
}

struct SimulateArgs {
  Common common;
  std::string config;
  std::optional<std::uint64_t> seed;
};

void RunSimulate(const SimulateArgs& a, const std::vector<std::string>& argv) {
  Manifest m("simulate", argv);
  json config;
  const std::string text = m.Input(a.config);
  try {
    config = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Failure(1, a.config + ": " + e.what());
  }
  if (a.seed) config["seed"] = *a.seed;
  if (a.common.threads) config["threads"] = a.common.threads;
  fbloop_log* raw = nullptr;
  char* truth = nullptr;
  Check(fbloop_log_simulate(config.dump().c_str(), &raw, &truth));
  LogHandle log(raw);
  const std::string truth_text = Take(truth) + "\n";
  char* lines = nullptr;
  Check(fbloop_log_to_jsonl(log.get(), &lines));
  const fs::path dir = a.common.out_dir;
  m.Output(dir / "log.jsonl", Take(lines));
  m.Output(dir / "truth.json", truth_text);
  if (config.contains("threads")) config.erase("threads");
  m.Config(config);
  m.Seed("seed", config.value("seed", std::uint64_t{0}));
  m.Write(dir);
  std::cout << "simulated " << fbloop_log_size(log.get()) << " records -> "
            << (dir / "log.jsonl").string() << "\n";
}

struct EstimateArgs {
  Common common;
  std::string log;
  std::string method = "rpce";
  std::string scheme = "overlap";
  std::string grid;
  std::vector<int> k_days;
  std::optional<double> study_end_h;
  std::optional<int> n_boot;
  double level = 0.95;
  std::vector<std::string> covariates;
};

void RunEstimate(const EstimateArgs& a, const std::vector<std::string>& argv) {
  Manifest m("estimate", argv);
  m.Input(a.log);
  fbloop_log* raw = nullptr;
  Check(fbloop_log_read(a.log.c_str(), nullptr, &raw));
  LogHandle log(raw);

  json options = {{"seed", a.common.seed}, {"level", a.level}};
  if (a.n_boot) options["n_boot"] = *a.n_boot;
  if (a.study_end_h) options["study_end_h"] = *a.study_end_h;
  if (a.method != "cem") options["scheme"] = a.scheme;
  if (!a.grid.empty()) options["grid"] = ParseGrid(a.grid);
  if (!a.k_days.empty()) options["k_days"] = a.k_days;
  if (!a.covariates.empty()) options["covariates"] = a.covariates;
  json call = options;
  call["threads"] = a.common.threads;

  char* csv = nullptr;
  char* diag = nullptr;
  const std::string text = call.dump();
  if (a.method == "rpce") {
    Check(fbloop_estimate_rpce(log.get(), text.c_str(), &csv, &diag));
  } else if (a.method == "active-days") {
    Check(fbloop_estimate_active_days(log.get(), text.c_str(), &csv, &diag));
  } else {
    Check(fbloop_estimate_cem(log.get(), text.c_str(), &csv, &diag));
  }
  const std::string table = Take(csv);
  const std::string diagnostics = Take(diag) + "\n";
  const fs::path dir = a.common.out_dir;
  m.Output(dir / "estimates.csv", table);
  m.Output(dir / "diagnostics.json", diagnostics);
  options["method"] = a.method;
  m.Config(options);
  m.Seed("seed", a.common.seed);
  m.Write(dir);
  if (a.method == "rpce") {
    std::cout << "wrote " << (dir / "estimates.csv").string() << "\n";
  } else {
    std::cout << table;
  }
}

struct BiasArgs {
  Common common;
  std::optional<double> s;
  double p = 0.7;
  double delta_p = 0.0;
  double n_ratio = 0.3;
  bool sweep = false;
  std::string s_values = "0.4,0.5,0.6,0.7";
  std::string delta_p_grid = "0:0.5:0.01";
  long panel = 0;
  int replicates = 20;
};

struct PanelSummary {
  double mean_s_hat = 0.0;
  double mean_abs_dev = 0.0;
};

PanelSummary RunPanel(double s, double p, double dp, long n, long joiners,
                      double exact, std::uint64_t seed, int replicates) {
  PanelSummary out;
  for (int r = 0; r < replicates; ++r) {
    double s_hat = 0.0;
    Check(fbloop_bias_panel(s, p, dp, n, joiners, seed + static_cast<std::uint64_t>(r), &s_hat));
    out.mean_s_hat += s_hat / replicates;
    out.mean_abs_dev += std::abs(s_hat - (s + exact)) / replicates;
  }
  return out;
}

void RunBias(const BiasArgs& a, const std::vector<std::string>& argv) {
  Manifest m("bias", argv);
  const long n_prev = a.panel > 0 ? a.panel : 100000;
  const long joiners = std::lround(a.n_ratio * static_cast<double>(n_prev));
  if (a.replicates < 1) throw Failure(1, "--replicates must be >= 1");
  json config = {{"p", a.p}, {"n_ratio", a.n_ratio}, {"panel", a.panel},
                 {"replicates", a.replicates}, {"sweep", a.sweep}};
  const fs::path dir = a.common.out_dir;
  if (a.sweep) {
    const auto s_values = ParseList(a.s_values);
    const auto grid = ParseGrid(a.delta_p_grid);
    config["s_values"] = s_values;
    config["delta_p_grid"] = grid;
    std::string table;
    if (a.panel == 0) {
      char* csv = nullptr;
      Check(fbloop_bias_sweep(s_values.data(), s_values.size(), grid.data(), grid.size(), &csv));
      table = Take(csv);
    } else {
      table = "s,delta_p,epsilon_hat,epsilon_exact,epsilon_mc,mc_mean_abs_dev\n";
      for (double s : s_values) {
        for (double dp : grid) {
          double approx = 0.0, exact = 0.0;
          Check(fbloop_bias_approx(s, dp, &approx));
          Check(fbloop_bias_exact(s, a.p, dp, n_prev, joiners, &exact));
          const auto mc = RunPanel(s, a.p, dp, n_prev, joiners, exact, a.common.seed, a.replicates);
          table += Format(s) + "," + Format(dp) + "," + Format(approx) + "," +
                   Format(exact) + "," + Format(mc.mean_s_hat - s) + "," +
                   Format(mc.mean_abs_dev) + "\n";
        }
      }
    }
    m.Output(dir / "sweep.csv", table);
    std::cout << "wrote " << (dir / "sweep.csv").string() << "\n";
  } else {
    if (!a.s) throw Failure(1, "--s is required unless --sweep is given");
    const double s = *a.s;
    config["s"] = s;
    config["delta_p"] = a.delta_p;
    double approx = 0.0, exact = 0.0;
    Check(fbloop_bias_approx(s, a.delta_p, &approx));
    Check(fbloop_bias_exact(s, a.p, a.delta_p, n_prev, joiners, &exact));
    json result = {{"s", s},
                   {"delta_p", a.delta_p},
                   {"epsilon_hat", approx},
                   {"epsilon_exact", exact},
                   {"measured_satisfaction", s + approx}};
    std::cout << "epsilon_hat (approx)   " << Format(approx) << "\n"
              << "epsilon (exact)        " << Format(exact) << "\n"
              << "measured satisfaction  " << Percent(s + approx) << "\n";
    if (a.panel > 0) {
      const auto mc = RunPanel(s, a.p, a.delta_p, n_prev, joiners, exact, a.common.seed, a.replicates);
      result["panel"] = {{"n_prev", n_prev}, {"n_joiners", joiners},
                         {"replicates", a.replicates}, {"mean_s_hat", mc.mean_s_hat},
                         {"mean_abs_dev", mc.mean_abs_dev}};
      std::cout << "panel mean s_hat       " << Format(mc.mean_s_hat) << "\n"
                << "panel mean |dev|       " << Format(mc.mean_abs_dev) << "\n";
    }
    m.Output(dir / "bias.json", result.dump(2) + "\n");
  }
  m.Config(config);
  m.Seed("seed", a.common.seed);
  m.Write(dir);
}

struct LangArgs {
  Common common;
  std::string corpus, lm, sentence, input, log, table, counts, embeddings;
  std::string metric = "all";
  double k = 0.01;
  double alpha = 0.4;
  double window_days = 7.0;
  std::optional<double> origin_h;
  std::optional<double> end_h;
  int quiet_days = 60;
};

LmHandle LoadLm(Manifest& m, const std::string& path) {
  m.Input(path);
  fbloop_lm* raw = nullptr;
  Check(fbloop_lm_load(path.c_str(), &raw));
  return LmHandle(raw);
}

void RunLangTrain(const LangArgs& a, const std::vector<std::string>& argv) {
  Manifest m("lang train", argv);
  m.Input(a.corpus);
  fbloop_lm* raw = nullptr;
  Check(fbloop_lm_train(a.corpus.c_str(), a.k, a.alpha, &raw));
  LmHandle lm(raw);
  char* text = nullptr;
  Check(fbloop_lm_to_json(lm.get(), &text));
  const fs::path dir = a.common.out_dir;
  m.Output(dir / "lm.json", Take(text) + "\n");
  m.Config({{"k", a.k}, {"alpha", a.alpha}});
  m.Write(dir);
  std::cout << "wrote " << (dir / "lm.json").string() << "\n";
}

void RunLangPp(const LangArgs& a, const std::vector<std::string>& argv) {
  Manifest m("lang pp", argv);
  auto lm = LoadLm(m, a.lm);
  std::vector<std::string> lines;
  if (!a.sentence.empty()) lines.push_back(a.sentence);
  if (!a.input.empty()) {
    std::istringstream in(m.Input(a.input));
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") != std::string::npos) lines.push_back(line);
    }
  }
  if (lines.empty()) throw Failure(1, "give --sentence or --input");
  std::string table = "index,perplexity\n";
  for (std::size_t i = 0; i < lines.size(); ++i) {
    double pp = 0.0;
    Check(fbloop_lm_perplexity(lm.get(), lines[i].c_str(), &pp));
    table += std::to_string(i) + "," + Format(pp) + "\n";
    if (!a.sentence.empty() && i == 0) std::cout << Format(pp) << "\n";
  }
  const fs::path dir = a.common.out_dir;
  m.Output(dir / "perplexity.csv", table);
  m.Config({{"sentence", a.sentence}});
  m.Write(dir);
  if (a.sentence.empty()) std::cout << table;
}

void RunLangTrend(const LangArgs& a, const std::vector<std::string>& argv) {
  Manifest m("lang trend", argv);
  auto lm = LoadLm(m, a.lm);
  m.Input(a.log);
  fbloop_log* raw = nullptr;
  Check(fbloop_log_read(a.log.c_str(), nullptr, &raw));
  LogHandle log(raw);
  json options = {{"window_days", a.window_days}, {"quiet_period_days", a.quiet_days}};
  if (a.origin_h) options["origin_h"] = *a.origin_h;
  if (a.end_h) options["end_h"] = *a.end_h;
  char* csv = nullptr;
  char* summary = nullptr;
  Check(fbloop_lang_trend(log.get(), lm.get(), options.dump().c_str(), &csv, &summary));
  const fs::path dir = a.common.out_dir;
  m.Output(dir / "trend.csv", Take(csv));
  m.Output(dir / "trend_summary.json", Take(summary) + "\n");
  m.Config(options);
  m.Write(dir);
  std::cout << "wrote " << (dir / "trend.csv").string() << "\n";
}

void RunLangDiversity(const LangArgs& a, const std::vector<std::string>& argv) {
  Manifest m("lang diversity", argv);
  m.Input(a.input);
  std::vector<std::string> metrics;
  if (a.metric == "all") {
    metrics = {"selfbleu", "jaccard"};
    if (!a.embeddings.empty()) metrics.push_back("wed");
  } else {
    metrics = {a.metric};
  }
  if (!a.embeddings.empty()) m.Input(a.embeddings);
  json result = json::object();
  for (const auto& metric : metrics) {
    double d = 0.0;
    Check(fbloop_lang_diversity(a.input.c_str(), metric.c_str(),
                                a.embeddings.empty() ? nullptr : a.embeddings.c_str(), &d));
    result[metric] = d;
    std::cout << metric << " " << Format(d) << "\n";
  }
  const fs::path dir = a.common.out_dir;
  m.Output(dir / "diversity.json", result.dump(2) + "\n");
  m.Config({{"metric", a.metric}});
  m.Write(dir);
}

void RunLangChisq(const LangArgs& a, const std::vector<std::string>& argv) {
  Manifest m("lang chisq", argv);
  long c[4] = {0, 0, 0, 0};
  if (!a.table.empty()) {
    m.Input(a.table);
    Check(fbloop_lang_read_table(a.table.c_str(), c));
  } else if (!a.counts.empty()) {
    const auto v = ParseList(a.counts);
    if (v.size() != 4) throw Failure(1, "--counts needs four values");
    for (int i = 0; i < 4; ++i) {
      if (v[i] < 0 || v[i] != std::floor(v[i])) {
        throw Failure(1, "--counts must be non-negative integers");
      }
      c[i] = static_cast<long>(v[i]);
    }
  } else {
    throw Failure(1, "give --table or --counts");
  }
  double stat = 0.0, p = 0.0, high = 0.0, low = 0.0;
  Check(fbloop_lang_chisq(c[0], c[1], c[2], c[3], &stat, &p, &high, &low));
  json result = {{"counts", {{"helpful_high", c[0]}, {"helpful_low", c[1]},
                             {"unhelpful_high", c[2]}, {"unhelpful_low", c[3]}}},
                 {"statistic", stat},
                 {"p_value", p},
                 {"unhelpful_rate_high", high},
                 {"unhelpful_rate_low", low},
                 {"rate_ratio", high / low}};
  std::cout << "chi2        " << Format(stat) << "\n"
            << "p-value     " << Format(p) << "\n"
            << "rate high   " << Percent(high) << "\n"
            << "rate low    " << Percent(low) << "\n"
            << "ratio       " << Format(high / low) << "\n";
  const fs::path dir = a.common.out_dir;
  m.Output(dir / "chisq.json", result.dump(2) + "\n");
  m.Config(result["counts"]);
  m.Write(dir);
}

struct ReportArgs {
  Common common;
  std::vector<std::string> runs;
};

void RunReport(const ReportArgs& a, const std::vector<std::string>& argv) {
  Manifest m("report", argv);
  std::string md = "# fbloop report\n\n";
  for (const auto& run : a.runs) {
    const fs::path manifest_path = fs::path(run) / "manifest.json";
    json man;
    try {
      man = json::parse(m.Input(manifest_path.string()));
    } catch (const json::parse_error& e) {
      throw Failure(1, manifest_path.string() + ": " + e.what());
    }
    md += "## " + run + " (" + man.value("command", "?") + ")\n\n";
    md += "version " + man.value("version", "?") + "\n\n";
    md += "```json\n" + man.value("config", json::object()).dump(2) + "\n```\n\n";
    md += "| output | sha256 |\n|---|---|\n";
    const json outputs = man.value("outputs", json::object());
    for (const auto& [path, digest] : outputs.items()) {
      md += "| " + path + " | `" + digest.get<std::string>() + "` |\n";
    }
    md += "\n";
    for (const auto& [path, digest] : outputs.items()) {
      const fs::path file = fs::path(run) / path;
      if (file.extension() != ".csv" || !fs::exists(file)) continue;
      std::istringstream in(ReadFile(file.string()));
      std::string line;
      md += "`" + path + "` (first rows)\n\n```\n";
      for (int i = 0; i < 6 && std::getline(in, line); ++i) md += line + "\n";
      md += "```\n\n";
    }
  }
  const fs::path dir = a.common.out_dir;
  m.Output(dir / "report.md", md);
  m.Write(dir);
  std::cout << "wrote " << (dir / "report.md").string() << "\n";
}

int Run(const std::vector<std::string>& argv);

void RunReplay(const std::string& manifest_path, const std::string& out_dir) {
  json man;
  try {
    man = json::parse(ReadFile(manifest_path));
  } catch (const json::parse_error& e) {
    throw Failure(1, manifest_path + ": " + e.what());
  }
  auto args = man.at("argv").get<std::vector<std::string>>();
  bool replaced = false;
  for (std::size_t i = 0; i + 1 < args.size(); ++i) {
    if (args[i] == "--out-dir") {
      args[i + 1] = out_dir;
      replaced = true;
    }
  }
  if (!replaced) {
    args.push_back("--out-dir");
    args.push_back(out_dir);
  }
  const int code = Run(args);
  if (code != 0) throw Failure(code, "replay failed");
  const json expected = man.value("outputs", json::object());
  const json actual =
      json::parse(ReadFile((fs::path(out_dir) / "manifest.json").string())).value("outputs", json::object());
  std::vector<std::string> differ;
  for (const auto& [name, digest] : expected.items()) {
    if (!actual.contains(name) || actual.at(name) != digest) differ.push_back(name);
  }
  if (!differ.empty()) {
    std::string list;
    for (const auto& d : differ) list += (list.empty() ? "" : ", ") + d;
    throw Failure(2, "replay outputs differ from the manifest: " + list);
  }
  std::cout << "replay reproduced " << expected.size() << " output(s)\n";
}

int Run(const std::vector<std::string>& argv) {
  CLI::App app{"fbloop: feedback-effect analysis for interactive assistants"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(fbloop_version()));

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Simulate an event log with ground truth");
  simulate->add_option("--config", sim.config, "Path to a JSON simulation config")->required();
  simulate->add_option("--seed", sim.seed, "Override the config seed");
  simulate->add_option("--out-dir", sim.common.out_dir, "Directory for outputs and manifest.json")->required();
  simulate->add_option("--threads", sim.common.threads, "Worker cap (0 = hardware concurrency)");

  EstimateArgs est;
  auto* estimate = app.add_subcommand("estimate", "Estimate causal effects from a log");
  estimate->add_option("--log", est.log, "JSON-lines event log")->required();
  estimate->add_option("--method", est.method, "Estimator (default rpce)")
      ->check(CLI::IsMember({"rpce", "active-days", "cem"}));
  estimate->add_option("--scheme", est.scheme, "ipw | overlap | entropy | all")
      ->check(CLI::IsMember({"ipw", "overlap", "entropy", "all"}));
  estimate->add_option("--grid", est.grid, "Hours: a,b,c or start:stop:step");
  estimate->add_option("--k", est.k_days, "Active-day windows in days")->delimiter(',');
  estimate->add_option("--study-end-h", est.study_end_h, "Censoring time (default: last event)");
  estimate->add_option("--n-boot", est.n_boot, "Bootstrap replicates");
  estimate->add_option("--level", est.level, "Confidence level");
  estimate->add_option("--covariates", est.covariates, "CEM covariates")->delimiter(',');
  AddCommon(estimate, est.common, true);
  estimate->get_option("--out-dir")->required();

  BiasArgs bias;
  auto* bias_cmd = app.add_subcommand("bias", "Survey measurement error under feedback");
  bias_cmd->add_option("--s", bias.s, "True satisfaction rate");
  bias_cmd->add_option("--p", bias.p, "Re-engagement probability of satisfied users");
  bias_cmd->add_option("--delta-p", bias.delta_p, "Re-engagement gap of unsatisfied users");
  bias_cmd->add_option("--n-ratio", bias.n_ratio, "Joiners per previous-period user");
  bias_cmd->add_flag("--sweep", bias.sweep, "Write the error sweep CSV");
  bias_cmd->add_option("--s-values", bias.s_values, "Sweep satisfaction rates");
  bias_cmd->add_option("--delta-p-grid", bias.delta_p_grid, "Sweep grid for delta-p");
  bias_cmd->add_option("--panel", bias.panel, "Monte Carlo panel size N");
  bias_cmd->add_option("--replicates", bias.replicates, "Monte Carlo replicates");
  AddCommon(bias_cmd, bias.common, true);

  LangArgs lang;
  auto* lang_cmd = app.add_subcommand("lang", "Language analysis");
  lang_cmd->require_subcommand(1);
  auto* train = lang_cmd->add_subcommand("train", "Train a trigram model");
  train->add_option("--corpus", lang.corpus, "One sentence per line")->required();
  train->add_option("--k", lang.k, "Lidstone constant");
  train->add_option("--alpha", lang.alpha, "Backoff factor");
  AddCommon(train, lang.common, false);
  auto* pp = lang_cmd->add_subcommand("pp", "Sentence perplexity");
  pp->add_option("--lm", lang.lm, "Model written by `lang train`")->required();
  pp->add_option("--sentence", lang.sentence, "Single sentence to score");
  pp->add_option("--input", lang.input, "One sentence per line");
  AddCommon(pp, lang.common, false);
  auto* trend = lang_cmd->add_subcommand("trend", "Cohort perplexity trend");
  trend->add_option("--lm", lang.lm, "Model written by `lang train`")->required();
  trend->add_option("--log", lang.log, "JSON-lines event log")->required();
  trend->add_option("--window-days", lang.window_days, "Window length in days (default 7)");
  trend->add_option("--origin-h", lang.origin_h, "First window start (default: end of the quiet period)");
  trend->add_option("--end-h", lang.end_h, "Study end (default: last event)");
  trend->add_option("--quiet-days", lang.quiet_days, "New-user quiet period in days (default 60)");
  AddCommon(trend, lang.common, false);
  auto* diversity = lang_cmd->add_subcommand("diversity", "Set diversity metrics");
  diversity->add_option("--input", lang.input, "One sentence per line")->required();
  diversity->add_option("--metric", lang.metric, "Metric (default all)")
      ->check(CLI::IsMember({"selfbleu", "jaccard", "wed", "all"}));
  diversity->add_option("--embeddings", lang.embeddings, "token v1 v2 ... per line");
  AddCommon(diversity, lang.common, false);
  auto* chisq = lang_cmd->add_subcommand("chisq", "Chi-squared test on a 2x2 table");
  chisq->add_option("--table", lang.table, "Rows helpful/unhelpful, columns high/low");
  chisq->add_option("--counts", lang.counts, "helpful_high,helpful_low,unhelpful_high,unhelpful_low");
  AddCommon(chisq, lang.common, false);

  ReportArgs report;
  auto* report_cmd = app.add_subcommand("report", "Assemble a Markdown report from run directories");
  report_cmd->add_option("--run-dir", report.runs, "Run directory holding manifest.json; repeatable")->required();
  AddCommon(report_cmd, report.common, false);

  std::string replay_manifest, replay_out;
  auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  replay->add_option("--manifest", replay_manifest, "manifest.json of the run to repeat")->required();
  replay->add_option("--out-dir", replay_out, "Directory for the repeated run")->required();

  std::vector<std::string> reversed(argv.rbegin(), argv.rend() - 1);
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*simulate) RunSimulate(sim, argv);
    if (*estimate) RunEstimate(est, argv);
    if (*bias_cmd) RunBias(bias, argv);
    if (*train) RunLangTrain(lang, argv);
    if (*pp) RunLangPp(lang, argv);
    if (*trend) RunLangTrend(lang, argv);
    if (*diversity) RunLangDiversity(lang, argv);
    if (*chisq) RunLangChisq(lang, argv);
    if (*report_cmd) RunReport(report, argv);
    if (*replay) RunReplay(replay_manifest, replay_out);
  } catch (const Failure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  return Run(std::vector<std::string>(argv, argv + argc));
}
