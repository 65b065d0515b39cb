// qkdsim: sweeps, end-to-end sessions and range analysis for the fiber
// BB84 link simulator.
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qkd/harness.hpp"

namespace {

const std::vector<std::pair<std::string, std::string>> kSettings = {
    {"length-km", "fiber length in km"},
    {"alpha", "fiber attenuation in dB/km (default 0.21)"},
    {"mu", "mean photon number per pulse"},
    {"eta-bob", "receiver efficiency including apparatus loss"},
    {"pe", "erroneous-count probability per gate"},
    {"dark", "dark-count share of pe"},
    {"emod", "modulation error rate"},
    {"clock-hz", "pulse rate"},
    {"gate-ns", "detector gate width"},
    {"duration-s", "session length in seconds (default 120)"},
    {"cycles", "session length in pulses; overrides duration-s"},
    {"seed", "RNG seed (required for simulate, serve, connect)"},
    {"sim-mode", "exact or aggregate"},
    {"attack", "none or intercept_resend:<fraction>"},
    {"transport", "inproc or tcp:host:port"},
    {"sample-fraction", "share of sifted bits disclosed to estimate QBER"},
    {"safety-bits", "extra bits removed by privacy amplification"},
    {"out", "CSV report path; keys go to <out>.alice.key and <out>.bob.key"},
    {"drift", "true to simulate phase drift and its tracking (exact mode)"},
    {"noise-model", "per_detector or single_process"},
    {"unconditional", "true to deduct the multi-photon fraction"},
    {"lengths", "sweep lengths, 0:170:5 or 0,5,10"},
};

struct Subcommand {
  CLI::App* app = nullptr;
  std::map<std::string, std::string> values;
  std::string config_file;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fiber BB84 QKD link simulator"};
  app.require_subcommand(1);

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"model-sweep", "Closed-form visibility, QBER and rate curves as CSV"},
      {"simulate", "Run a full session with both endpoints in this process"},
      {"serve", "Run Alice, listening on --transport tcp:host:port"},
      {"connect", "Run Bob, connecting to --transport tcp:host:port"},
      {"analyze", "Maximum secure range, PNS limit and security verdicts"},
  };
  std::map<std::string, Subcommand> subs;
  for (const auto& [name, help] : commands) {
    auto& sub = subs[name];
    sub.app = app.add_subcommand(name, help);
    sub.app->add_option("--config", sub.config_file, "key=value settings file; flags override it");
    for (const auto& [key, text] : kSettings) sub.app->add_option("--" + key, sub.values[key], text);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : qkd::harness::kExitConfig;
  }

  for (auto& [name, sub] : subs) {
    if (!sub.app->parsed()) continue;
    std::map<std::string, std::string> settings;
    try {
      if (!sub.config_file.empty()) settings = qkd::harness::read_config_file(sub.config_file);
    } catch (const qkd::harness::ConfigError& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return qkd::harness::kExitConfig;
    }
    for (const auto& [key, text] : kSettings) {
      if (sub.app->count("--" + key) > 0) settings[key] = sub.values[key];
    }
    const auto result = qkd::harness::run_command(name, settings);
    std::cout << result.out;
    std::cerr << result.err;
    return result.exit_code;
  }
  return qkd::harness::kExitConfig;
}
