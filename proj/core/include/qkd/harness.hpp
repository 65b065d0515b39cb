#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qkd/bb84_session.hpp"
#include "qkd/security.hpp"

namespace qkd::harness {

/// Configuration problem, exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitAnalysis = 3;
inline constexpr int kExitInfrastructure = 4;

inline constexpr const char* kCsvHeader =
    "length_km,transmittance,visibility_pred,qber_pred,qber_measured,sifted_bits,sifted_rate_bps,leak_bits,"
    "final_bits,final_rate_bps,qber_ok,pns_ok,seed";

struct Transport {
  enum class Kind { inproc, tcp } kind = Kind::inproc;
  std::string host;
  std::uint16_t port = 0;

  static Transport parse(const std::string& text);
};

struct RunConfig {
  LinkParams link;
  std::optional<std::uint64_t> cycles;
  std::optional<double> duration_s;
  std::optional<std::uint64_t> seed;
  SimMode sim_mode = SimMode::aggregate;
  AttackConfig attack;
  double sample_fraction = 0.1;
  std::size_t safety_bits = 30;
  Transport transport;
  std::string out;
  bool drift = false;
  NoiseModel noise = NoiseModel::per_detector;
  bool unconditional = false;
  std::vector<double> lengths;

  /// cycles, or duration x clock (120 s when neither is set).
  std::uint64_t n_cycles() const;
  double duration() const;
  SessionConfig session() const;
};

/// Flat key=value settings; '#' starts a comment.
std::map<std::string, std::string> read_config_file(const std::string& path);

/// Builds a RunConfig from merged settings (flag names without "--").
/// Throws ConfigError on unknown keys, bad values or violated invariants.
RunConfig parse_run_config(const std::map<std::string, std::string>& settings);

/// "0:170:5" (inclusive range) or "0,5,10".
std::vector<double> parse_lengths(const std::string& text);

struct ExperimentReport {
  double length_km = 0.0;
  double transmittance = 0.0;
  double visibility_pred = 0.0;
  double qber_pred = 0.0;
  std::optional<double> qber_measured;
  std::optional<double> sifted_bits;
  std::optional<double> sifted_rate_bps;
  std::optional<double> leak_bits;
  std::optional<double> final_bits;
  std::optional<double> final_rate_bps;
  bool qber_ok = false;
  bool pns_ok = false;
  std::optional<std::uint64_t> seed;
};

/// One CSV line, floats at 6 significant digits, empty for absent values.
std::string csv_row(const ExperimentReport& r);

/// Closed-form part of a report row at the config's length.
ExperimentReport model_row(const LinkParams& link);

struct SimulationResult {
  ExperimentReport report;
  SessionOutcome alice;
  SessionOutcome bob;
  LeakLedger tapped;
};

/// Runs both endpoints in this process over the configured transport
/// (in-process pipes or loopback TCP). Throws TransportError when no
/// connection can be made.
SimulationResult run_simulation(const RunConfig& config, bool tap = false);

/// Builds the report row from Bob's outcome.
ExperimentReport report_from(const RunConfig& config, const SessionOutcome& bob);

struct CommandResult {
  int exit_code = kExitOk;
  std::string out;
  std::string err;
};

CommandResult cmd_model_sweep(const RunConfig& config);
CommandResult cmd_simulate(const RunConfig& config);
CommandResult cmd_analyze(const RunConfig& config);
/// Alice, listening on the configured tcp transport.
CommandResult cmd_serve(const RunConfig& config);
/// Bob, connecting to the configured tcp transport.
CommandResult cmd_connect(const RunConfig& config);

/// Parses settings and dispatches a subcommand, mapping errors to exit codes.
CommandResult run_command(const std::string& command, const std::map<std::string, std::string>& settings);

std::string key_file_text(const Bits& key);

}  // namespace qkd::harness
