#include "qkd/harness.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

namespace qkd::harness {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) throw ConfigError(key + ": not a number: '" + text + "'");
  return v;
}

std::uint64_t to_u64(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + ": not a non-negative integer: '" + text + "'");
  return v;
}

bool to_bool(const std::string& key, const std::string& text) {
  if (text == "1" || text == "true" || text == "on" || text == "yes") return true;
  if (text == "0" || text == "false" || text == "off" || text == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + text + "'");
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string opt(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

bool write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  return static_cast<bool>(f);
}

std::string status_line(const SessionOutcome& o) {
  if (o.completed) return "status=completed";
  return "status=aborted:" + std::string(o.abort_reason ? wire::to_string(*o.abort_reason) : "unknown");
}

}  // namespace

Transport Transport::parse(const std::string& text) {
  if (text == "inproc") return {};
  if (text.rfind("tcp:", 0) == 0) {
    const std::string rest = text.substr(4);
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos || colon == 0) throw ConfigError("transport: expected tcp:host:port");
    Transport t;
    t.kind = Kind::tcp;
    t.host = rest.substr(0, colon);
    const std::uint64_t port = to_u64("transport", rest.substr(colon + 1));
    if (port > 65535) throw ConfigError("transport: port out of range");
    t.port = static_cast<std::uint16_t>(port);
    return t;
  }
  throw ConfigError("transport: expected inproc or tcp:host:port, got '" + text + "'");
}

std::uint64_t RunConfig::n_cycles() const {
  if (cycles) return *cycles;
  return static_cast<std::uint64_t>(std::llround(duration() * link.clock_hz));
}

double RunConfig::duration() const {
  if (cycles) return static_cast<double>(*cycles) / link.clock_hz;
  return duration_s.value_or(120.0);
}

SessionConfig RunConfig::session() const {
  SessionConfig s;
  s.link = link;
  s.n_cycles = n_cycles();
  s.sim_mode = sim_mode;
  s.drift.enabled = drift;
  s.attack = attack;
  s.sim.noise = noise;
  s.seed = seed.value_or(0);
  s.sample_fraction = sample_fraction;
  s.safety_bits = safety_bits;
  s.unconditional = unconditional;
  return s;
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path);
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    if (key.rfind("--", 0) == 0) key.erase(0, 2);
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

std::vector<double> parse_lengths(const std::string& text) {
  std::vector<double> out;
  if (text.empty()) return out;
  if (text.find(':') != std::string::npos) {
    std::vector<double> parts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(to_double("lengths", trim(item)));
    if (parts.size() != 3 || parts[2] <= 0.0 || parts[1] < parts[0]) {
      throw ConfigError("lengths: expected start:stop:step with step > 0");
    }
    const auto steps = static_cast<long>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9));
    for (long i = 0; i <= steps; ++i) out.push_back(parts[0] + static_cast<double>(i) * parts[2]);
    return out;
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double("lengths", trim(item)));
  return out;
}

RunConfig parse_run_config(const std::map<std::string, std::string>& settings) {
  RunConfig c;
  for (const auto& [key, value] : settings) {
    if (key == "length-km") c.link.length_km = to_double(key, value);
    else if (key == "alpha") c.link.alpha_db_per_km = to_double(key, value);
    else if (key == "mu") c.link.mu = to_double(key, value);
    else if (key == "eta-bob") c.link.eta_bob = to_double(key, value);
    else if (key == "pe") c.link.p_err_cycle = to_double(key, value);
    else if (key == "dark") c.link.p_dark_cycle = to_double(key, value);
    else if (key == "emod") c.link.e_mod = to_double(key, value);
    else if (key == "clock-hz") c.link.clock_hz = to_double(key, value);
    else if (key == "gate-ns") c.link.gate_ns = to_double(key, value);
    else if (key == "duration-s") c.duration_s = to_double(key, value);
    else if (key == "cycles") c.cycles = to_u64(key, value);
    else if (key == "seed") c.seed = to_u64(key, value);
    else if (key == "sim-mode") {
      if (value == "exact") c.sim_mode = SimMode::exact;
      else if (value == "aggregate") c.sim_mode = SimMode::aggregate;
      else throw ConfigError("sim-mode: expected exact or aggregate");
    } else if (key == "attack") {
      try {
        c.attack = AttackConfig::parse(value);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    } else if (key == "sample-fraction") c.sample_fraction = to_double(key, value);
    else if (key == "safety-bits") c.safety_bits = to_u64(key, value);
    else if (key == "transport") c.transport = Transport::parse(value);
    else if (key == "out") c.out = value;
    else if (key == "drift") c.drift = to_bool(key, value);
    else if (key == "noise-model") {
      if (value == "per-detector") c.noise = NoiseModel::per_detector;
      else if (value == "single") c.noise = NoiseModel::single_process;
      else throw ConfigError("noise-model: expected per-detector or single");
    } else if (key == "unconditional") c.unconditional = to_bool(key, value);
    else if (key == "lengths") c.lengths = parse_lengths(value);
    else throw ConfigError("unknown setting '" + key + "'");
  }
  if (c.cycles && c.duration_s) throw ConfigError("set exactly one of cycles and duration-s");
  if (c.duration_s && !(*c.duration_s > 0.0)) throw ConfigError("duration-s must be > 0");
  if (c.cycles && *c.cycles == 0) throw ConfigError("cycles must be >= 1");
  if (!(c.sample_fraction > 0.0 && c.sample_fraction < 1.0)) throw ConfigError("sample-fraction must lie in (0, 1)");
  try {
    c.link.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

std::string csv_row(const ExperimentReport& r) {
  std::string s;
  s += fmt(r.length_km) + ",";
  s += fmt(r.transmittance) + ",";
  s += fmt(r.visibility_pred) + ",";
  s += fmt(r.qber_pred) + ",";
  s += opt(r.qber_measured) + ",";
  s += opt(r.sifted_bits) + ",";
  s += opt(r.sifted_rate_bps) + ",";
  s += opt(r.leak_bits) + ",";
  s += opt(r.final_bits) + ",";
  s += opt(r.final_rate_bps) + ",";
  s += std::string(r.qber_ok ? "1" : "0") + ",";
  s += std::string(r.pns_ok ? "1" : "0") + ",";
  s += r.seed ? std::to_string(*r.seed) : "";
  return s;
}

ExperimentReport model_row(const LinkParams& link) {
  ExperimentReport r;
  r.length_km = link.length_km;
  r.transmittance = transmittance(link.alpha_db_per_km, link.length_km);
  r.visibility_pred = visibility_model(link);
  r.qber_pred = qber_model_extended(link);
  r.sifted_rate_bps = sifted_rate_model(link);
  r.qber_ok = r.qber_pred < kQberThreshold;
  r.pns_ok = link.mu > 0.0 && link.length_km <= pns_range_limit(link);
  return r;
}

ExperimentReport report_from(const RunConfig& config, const SessionOutcome& bob) {
  ExperimentReport r = model_row(config.link);
  const double duration = config.duration();
  const auto& rep = bob.report;
  bool estimated = bob.abort_reason == wire::AbortReason::qber_threshold && rep.sifted_bits >= 100;
  for (auto p : bob.phases) estimated = estimated || p == SessionPhase::reconcile;
  if (rep.reconciled_bits > 0) {
    r.qber_measured = rep.qber_measured;
  } else if (estimated) {
    r.qber_measured = rep.qber_estimate;
  }
  r.sifted_bits = static_cast<double>(rep.sifted_bits);
  r.sifted_rate_bps = static_cast<double>(rep.sifted_bits) / duration;
  r.leak_bits = static_cast<double>(rep.leak.total());
  const double final_bits = bob.completed ? static_cast<double>(bob.key.bits.size()) : 0.0;
  r.final_bits = final_bits;
  r.final_rate_bps = final_bits / duration;
  r.qber_ok = r.qber_measured ? *r.qber_measured < kQberThreshold : false;
  r.seed = config.seed;
  return r;
}

SimulationResult run_simulation(const RunConfig& config, bool tap) {
  const SessionConfig session = config.session();
  auto recorder = tap ? std::make_shared<WireTap>() : nullptr;
  SimulationResult result;

  std::unique_ptr<FramedChannel> alice_channel, bob_channel;
  std::unique_ptr<TcpListener> listener;
  if (config.transport.kind == Transport::Kind::inproc) {
    auto [a, b] = make_pipe_pair();
    alice_channel = std::make_unique<FramedChannel>(std::move(a), session.timeout);
    bob_channel = std::make_unique<FramedChannel>(std::move(b), session.timeout);
  } else {
    listener = std::make_unique<TcpListener>(config.transport.host, config.transport.port);
  }

  std::exception_ptr alice_error;
  std::thread alice_thread([&] {
    try {
      if (listener) alice_channel = std::make_unique<FramedChannel>(listener->accept(session.timeout), session.timeout);
      if (recorder) alice_channel->set_tap(recorder);
      result.alice = run_session(Role::alice, session, *alice_channel);
      alice_channel->close();
    } catch (...) {
      alice_error = std::current_exception();
    }
  });
  std::exception_ptr bob_error;
  try {
    if (listener) {
      bob_channel = std::make_unique<FramedChannel>(
          tcp_connect(config.transport.host.empty() ? "127.0.0.1" : config.transport.host, listener->port(),
                      session.timeout),
          session.timeout);
    }
    if (recorder) bob_channel->set_tap(recorder);
    result.bob = run_session(Role::bob, session, *bob_channel);
  } catch (...) {
    bob_error = std::current_exception();
  }
  alice_thread.join();
  if (bob_channel) bob_channel->close();
  if (alice_error) std::rethrow_exception(alice_error);
  if (bob_error) std::rethrow_exception(bob_error);

  result.report = report_from(config, result.bob);
  if (recorder) result.tapped = reconstruct_ledger(recorder->frames());
  return result;
}

std::string key_file_text(const Bits& key) { return to_string(key) + "\n"; }

CommandResult cmd_model_sweep(const RunConfig& config) {
  if (config.lengths.empty()) return {kExitConfig, "", "model-sweep: no lengths given (use --lengths)\n"};
  for (std::size_t i = 1; i < config.lengths.size(); ++i) {
    if (config.lengths[i] < config.lengths[i - 1]) return {kExitConfig, "", "model-sweep: lengths must ascend\n"};
  }
  if (config.lengths.front() < 0.0) return {kExitConfig, "", "model-sweep: lengths must be >= 0\n"};
  CommandResult res;
  res.out = std::string(kCsvHeader) + "\n";
  for (double length : config.lengths) {
    LinkParams link = config.link;
    link.length_km = length;
    ExperimentReport r = model_row(link);
    r.sifted_bits = *r.sifted_rate_bps * config.duration();
    res.out += csv_row(r) + "\n";
  }
  if (!config.out.empty() && !write_file(config.out, res.out)) {
    return {kExitInfrastructure, "", "cannot write " + config.out + "\n"};
  }
  return res;
}

CommandResult cmd_simulate(const RunConfig& config) {
  if (!config.seed) return {kExitConfig, "", "simulate: --seed is required\n"};
  SimulationResult sim;
  try {
    sim = run_simulation(config);
  } catch (const TransportError& e) {
    return {kExitInfrastructure, "", std::string("transport failure: ") + e.what() + "\n"};
  }
  CommandResult res;
  res.out = std::string(kCsvHeader) + "\n" + csv_row(sim.report) + "\n";
  res.err = status_line(sim.bob) + "\n";
  if (sim.alice.completed != sim.bob.completed || sim.alice.key.bits != sim.bob.key.bits) {
    res.err += "endpoint keys differ\n";
    res.exit_code = kExitInfrastructure;
  }
  if (!config.out.empty()) {
    bool ok = write_file(config.out, res.out);
    if (sim.bob.completed) {
      ok = ok && write_file(config.out + ".alice.key", key_file_text(sim.alice.key.bits));
      ok = ok && write_file(config.out + ".bob.key", key_file_text(sim.bob.key.bits));
    }
    if (!ok) return {kExitInfrastructure, res.out, res.err + "cannot write output files\n"};
  }
  return res;
}

CommandResult cmd_analyze(const RunConfig& config) {
  CommandResult res;
  std::ostringstream out;
  const double pns = pns_range_limit(config.link);
  out << "p_multiphoton=" << fmt(p_multiphoton(config.link.mu)) << "\n";
  out << "pns_limit_km=" << fmt(pns) << "\n";
  std::optional<double> range;
  try {
    range = solve_max_range(config.link);
  } catch (const InsecureAtZero&) {
    res.exit_code = kExitAnalysis;
    res.err = "insecure_at_zero: QBER at zero length is not below 0.11\n";
    res.out = out.str();
    return res;
  }
  out << "max_range_km=" << (range ? fmt(*range) : std::string("infinite")) << "\n";
  const double e = qber_model_extended(config.link);
  const SecurityVerdict v = verdict(e, config.link);
  out << "length_km=" << fmt(config.link.length_km) << "\n";
  out << "qber_pred=" << fmt(e) << "\n";
  out << "qber_ok=" << (v.qber_ok ? 1 : 0) << "\n";
  out << "pns_ok=" << (v.pns_ok ? 1 : 0) << "\n";
  out << "notes=" << v.notes << "\n";
  res.out = out.str();
  return res;
}

CommandResult cmd_serve(const RunConfig& config) {
  if (!config.seed) return {kExitConfig, "", "serve: --seed is required\n"};
  if (config.transport.kind != Transport::Kind::tcp) return {kExitConfig, "", "serve: needs --transport tcp:host:port\n"};
  const SessionConfig session = config.session();
  SessionOutcome alice;
  try {
    TcpListener listener(config.transport.host, config.transport.port);
    FramedChannel channel(listener.accept(session.timeout), session.timeout);
    alice = run_session(Role::alice, session, channel);
    channel.close();
  } catch (const TransportError& e) {
    return {kExitInfrastructure, "", std::string("transport failure: ") + e.what() + "\n"};
  }
  CommandResult res;
  res.err = status_line(alice) + "\n";
  if (!config.out.empty() && alice.completed && !write_file(config.out + ".alice.key", key_file_text(alice.key.bits))) {
    return {kExitInfrastructure, "", res.err + "cannot write key file\n"};
  }
  return res;
}

CommandResult cmd_connect(const RunConfig& config) {
  if (!config.seed) return {kExitConfig, "", "connect: --seed is required\n"};
  if (config.transport.kind != Transport::Kind::tcp) {
    return {kExitConfig, "", "connect: needs --transport tcp:host:port\n"};
  }
  const SessionConfig session = config.session();
  SessionOutcome bob;
  try {
    FramedChannel channel(tcp_connect(config.transport.host, config.transport.port, session.timeout), session.timeout);
    bob = run_session(Role::bob, session, channel);
    channel.close();
  } catch (const TransportError& e) {
    return {kExitInfrastructure, "", std::string("transport failure: ") + e.what() + "\n"};
  }
  CommandResult res;
  res.out = std::string(kCsvHeader) + "\n" + csv_row(report_from(config, bob)) + "\n";
  res.err = status_line(bob) + "\n";
  if (!config.out.empty()) {
    bool ok = write_file(config.out, res.out);
    if (bob.completed) ok = ok && write_file(config.out + ".bob.key", key_file_text(bob.key.bits));
    if (!ok) return {kExitInfrastructure, res.out, res.err + "cannot write output files\n"};
  }
  return res;
}

CommandResult run_command(const std::string& command, const std::map<std::string, std::string>& settings) {
  RunConfig config;
  try {
    config = parse_run_config(settings);
  } catch (const ConfigError& e) {
    return {kExitConfig, "", std::string("config error: ") + e.what() + "\n"};
  }
  if (command == "model-sweep") return cmd_model_sweep(config);
  if (command == "simulate") return cmd_simulate(config);
  if (command == "analyze") return cmd_analyze(config);
  if (command == "serve") return cmd_serve(config);
  if (command == "connect") return cmd_connect(config);
  return {kExitConfig, "", "unknown command '" + command + "'\n"};
}

}  // namespace qkd::harness
