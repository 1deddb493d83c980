#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hnclass/classes.hpp"
#include "hnclass/error.hpp"
#include "hnclass/rng.hpp"

namespace hnclass {

inline constexpr std::string_view kGeneratorVersion = "hnclass-datagen/1";

/// One monitoring cycle: the concatenated tool outputs plus the true state.
struct LogSample {
  std::string text;
  ProblemClass label = ProblemClass::kNormalState;
  std::uint64_t seed_trace = 0;

  friend bool operator==(const LogSample&, const LogSample&) = default;
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double x) const noexcept { return x >= lo && x <= hi; }
};

/// Baseline randomization ranges and the per-fault override bands.
///
/// Link delay and jitter are per direction on the host link, so a ping round
/// trip crosses them twice.
struct ScenarioBands {
  Range distance_m{0.0, 10.0};
  Range delay_ms{0.0, 100.0};
  Range jitter_ms{0.0, 20.0};
  Range tx_power_dbm{15.0, 22.0};

  Range high_delay_ms{150.0, 400.0};
  Range high_jitter_ms{100.0, 250.0};
  Range packet_loss{0.2, 0.8};
  Range far_distance_m{15.0, 40.0};
  Range low_tx_power_dbm{5.0, 12.0};

  nlohmann::json to_json() const {
    const auto r = [](const Range& x) { return nlohmann::json::array({x.lo, x.hi}); };
    return {{"distance_m", r(distance_m)},         {"delay_ms", r(delay_ms)},
            {"jitter_ms", r(jitter_ms)},           {"tx_power_dbm", r(tx_power_dbm)},
            {"high_delay_ms", r(high_delay_ms)},   {"high_jitter_ms", r(high_jitter_ms)},
            {"packet_loss", r(packet_loss)},       {"far_distance_m", r(far_distance_m)},
            {"low_tx_power_dbm", r(low_tx_power_dbm)}};
  }
};

enum class RouteState { kCorrect, kMissing, kCorrupt };

struct ScenarioState {
  double station_distance_m = 0.0;
  double link_delay_ms = 0.0;
  double link_jitter_ms = 0.0;
  double ap_tx_power_dbm = 20.0;
  double packet_loss = 0.0;  // fraction of ping probes dropped

  bool host_interface_down = false;
  bool router_interface_down = false;
  bool dns_wrong_ip = false;
  RouteState default_route = RouteState::kCorrect;

  int images_downloaded = 1;  // station traffic, 1..5 per cycle
};

namespace net {
inline constexpr std::string_view kHostIp = "192.0.2.10";
inline constexpr std::string_view kGatewayIp = "192.0.2.1";
inline constexpr std::string_view kSubnet = "192.0.2.0/24";
inline constexpr std::string_view kHostIf = "eth0";
inline constexpr std::string_view kDnsIp = "198.51.100.53";
inline constexpr std::string_view kPingTarget = "198.51.100.10";
inline constexpr std::string_view kApIf = "wlan0";
inline constexpr std::string_view kStationMac = "02:00:00:00:02:00";
inline constexpr std::string_view kDomain = "example.com";
inline constexpr int kPingProbes = 5;
inline constexpr double kReferenceLossDb = 40.0;
inline constexpr double kPathLossExponent = 3.0;
}  // namespace net

/// Log-distance path loss; distances under the 1 m reference are clamped to it.
inline double path_loss_db(double distance_m) {
  const double d = std::max(distance_m, 1.0);
  return net::kReferenceLossDb + 10.0 * net::kPathLossExponent * std::log10(d);
}

inline double station_signal_dbm(double distance_m, double tx_power_dbm) {
  return tx_power_dbm - path_loss_db(distance_m);
}

/// Draws the baseline parameters, then applies the fault of `cls`.
inline ScenarioState sample_scenario(ProblemClass cls, Rng& rng, const ScenarioBands& bands = {}) {
  const auto draw = [&rng](const Range& r) { return rng.uniform(r.lo, r.hi); };
  ScenarioState s;
  s.station_distance_m = draw(bands.distance_m);
  s.link_delay_ms = draw(bands.delay_ms);
  s.link_jitter_ms = draw(bands.jitter_ms);
  s.ap_tx_power_dbm = draw(bands.tx_power_dbm);
  s.images_downloaded = static_cast<int>(rng.uniform_int(1, 5));

  switch (cls) {
    case ProblemClass::kCorruptDefaultRoute: s.default_route = RouteState::kCorrupt; break;
    case ProblemClass::kDnsWrongIp: s.dns_wrong_ip = true; break;
    case ProblemClass::kHighDelay: s.link_delay_ms = draw(bands.high_delay_ms); break;
    case ProblemClass::kHighJitter: s.link_jitter_ms = draw(bands.high_jitter_ms); break;
    case ProblemClass::kHighPacketLoss: s.packet_loss = draw(bands.packet_loss); break;
    case ProblemClass::kHostInterfaceDown: s.host_interface_down = true; break;
    case ProblemClass::kLowApTxPower: s.ap_tx_power_dbm = draw(bands.low_tx_power_dbm); break;
    case ProblemClass::kNoDefaultRoute: s.default_route = RouteState::kMissing; break;
    case ProblemClass::kNormalState: break;
    case ProblemClass::kRouterInterfaceDown: s.router_interface_down = true; break;
    case ProblemClass::kStationFarAway: s.station_distance_m = draw(bands.far_distance_m); break;
  }
  return s;
}

/// Throws GenerationError unless `s` is exactly what `cls` would produce.
inline void check_consistent(const ScenarioState& s, ProblemClass cls, const ScenarioBands& bands = {}) {
  const auto require = [cls](bool ok, std::string_view what) {
    if (!ok) {
      throw GenerationError("scenario inconsistent with " + std::string(class_name(cls)) + ": " +
                            std::string(what));
    }
  };
  const bool delay_fault = cls == ProblemClass::kHighDelay;
  const bool jitter_fault = cls == ProblemClass::kHighJitter;
  const bool loss_fault = cls == ProblemClass::kHighPacketLoss;
  const bool far_fault = cls == ProblemClass::kStationFarAway;
  const bool tx_fault = cls == ProblemClass::kLowApTxPower;

  require((delay_fault ? bands.high_delay_ms : bands.delay_ms).contains(s.link_delay_ms), "link delay");
  require((jitter_fault ? bands.high_jitter_ms : bands.jitter_ms).contains(s.link_jitter_ms), "link jitter");
  require(loss_fault ? bands.packet_loss.contains(s.packet_loss) : s.packet_loss == 0.0, "packet loss");
  require((far_fault ? bands.far_distance_m : bands.distance_m).contains(s.station_distance_m),
          "station distance");
  require((tx_fault ? bands.low_tx_power_dbm : bands.tx_power_dbm).contains(s.ap_tx_power_dbm), "tx power");
  require(s.host_interface_down == (cls == ProblemClass::kHostInterfaceDown), "host interface flag");
  require(s.router_interface_down == (cls == ProblemClass::kRouterInterfaceDown), "router interface flag");
  require(s.dns_wrong_ip == (cls == ProblemClass::kDnsWrongIp), "dns flag");
  const RouteState route = cls == ProblemClass::kNoDefaultRoute       ? RouteState::kMissing
                           : cls == ProblemClass::kCorruptDefaultRoute ? RouteState::kCorrupt
                                                                       : RouteState::kCorrect;
  require(s.default_route == route, "default route");
  require(s.images_downloaded >= 1 && s.images_downloaded <= 5, "image count");
}

namespace detail {

template <typename... Args>
std::string format(const char* fmt, Args... args) {
  const int n = std::snprintf(nullptr, 0, fmt, args...);
  std::string out(static_cast<std::size_t>(n), '\0');
  std::snprintf(out.data(), out.size() + 1, fmt, args...);
  return out;
}

/// ping prints three significant digits.
inline std::string format_rtt(double ms) {
  if (ms < 1.0) return format("%.3f", ms);
  if (ms < 10.0) return format("%.2f", ms);
  if (ms < 100.0) return format("%.1f", ms);
  return format("%.0f", ms);
}

/// One direction through the shaped link; netem never delays below zero.
inline double link_traversal_ms(const ScenarioState& s, Rng& rng) {
  return std::max(0.0, s.link_delay_ms + rng.uniform(-s.link_jitter_ms, s.link_jitter_ms));
}

inline double round_trip_ms(const ScenarioState& s, Rng& rng) {
  const double switching = rng.uniform(0.04, 0.4);
  return switching + link_traversal_ms(s, rng) + link_traversal_ms(s, rng);
}

inline bool reaches_network(const ScenarioState& s) {
  return !s.host_interface_down && s.default_route != RouteState::kMissing;
}

inline bool reaches_gateway(const ScenarioState& s) {
  return reaches_network(s) && !s.router_interface_down && s.default_route != RouteState::kCorrupt;
}

inline std::string render_ping(const ScenarioState& s, Rng& rng) {
  using namespace std::string_literals;
  const std::string target(net::kPingTarget);
  std::string out = "### ping: reachability and round-trip time of the upstream test host\n";
  if (!reaches_network(s)) return out + "ping: connect: Network is unreachable\n";

  out += "PING " + target + " (" + target + ") 56(84) bytes of data.\n";
  const int n = net::kPingProbes;
  if (!reaches_gateway(s)) {
    for (int seq = 1; seq <= n; ++seq) {
      out += "From " + std::string(net::kHostIp) + " icmp_seq=" + std::to_string(seq) +
             " Destination Host Unreachable\n";
    }
    out += "\n--- " + target + " ping statistics ---\n";
    out += format("%d packets transmitted, 0 received, +%d errors, 100%% packet loss, time %dms\n", n, n,
                  static_cast<int>(rng.uniform_int(4040, 4110)));
    return out + "pipe 3\n";
  }

  std::array<bool, net::kPingProbes> lost{};
  if (s.packet_loss > 0.0) {
    const int dropped = std::clamp(static_cast<int>(std::lround(s.packet_loss * n)), 1, n - 1);
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    rng.shuffle(order);
    for (int i = 0; i < dropped; ++i) lost[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = true;
  }

  std::vector<double> rtts;
  for (int seq = 1; seq <= n; ++seq) {
    const double rtt = round_trip_ms(s, rng);
    if (lost[static_cast<std::size_t>(seq - 1)]) continue;
    rtts.push_back(rtt);
    out += "64 bytes from " + target + ": icmp_seq=" + std::to_string(seq) +
           " ttl=63 time=" + format_rtt(rtt) + " ms\n";
  }
  const int received = static_cast<int>(rtts.size());
  const int loss_pct = (n - received) * 100 / n;
  out += "\n--- " + target + " ping statistics ---\n";
  out += format("%d packets transmitted, %d received, %d%% packet loss, time %dms\n", n, received, loss_pct,
                static_cast<int>(rng.uniform_int(4002, 4015)));
  double sum = 0.0, sum_sq = 0.0, lo = rtts.front(), hi = rtts.front();
  for (double r : rtts) {
    sum += r;
    sum_sq += r * r;
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  const double avg = sum / received;
  const double mdev = std::sqrt(std::max(0.0, sum_sq / received - avg * avg));
  out += format("rtt min/avg/max/mdev = %.3f/%.3f/%.3f/%.3f ms\n", lo, avg, hi, mdev);
  return out;
}

inline std::string dig_banner() {
  return "; <<>> DiG 9.18.24 <<>> " + std::string(net::kDomain) + "\n;; global options: +cmd\n";
}

inline std::string render_dig(const ScenarioState& s, Rng& rng) {
  const std::string domain(net::kDomain);
  std::string server(net::kDnsIp);
  if (s.dns_wrong_ip) server = "198.51.100." + std::to_string(rng.uniform_int(100, 199));
  std::string out = "### dig: name resolution through the configured DNS server\n";

  if (!reaches_network(s)) {
    for (int i = 0; i < 3; ++i) {
      out += ";; UDP setup with " + server + "#53(" + server + ") for " + domain +
             " failed: network unreachable.\n";
    }
    return out + "\n" + dig_banner() + ";; no servers could be reached\n";
  }

  // Each attempt needs the query and the answer to cross the link.
  int failures = 0;
  if (!reaches_gateway(s) || s.dns_wrong_ip) {
    failures = 3;
  } else if (s.packet_loss > 0.0) {
    const double attempt_fails = 1.0 - (1.0 - s.packet_loss) * (1.0 - s.packet_loss);
    while (failures < 3 && rng.bernoulli(attempt_fails)) ++failures;
  }
  for (int i = 0; i < failures; ++i) out += ";; communications error to " + server + "#53: timed out\n";
  if (failures == 3) return out + "\n" + dig_banner() + ";; no servers could be reached\n";
  if (failures > 0) out += "\n";

  out += dig_banner();
  out += ";; Got answer:\n";
  out += format(";; ->>HEADER<<- opcode: QUERY, status: NOERROR, id: %d\n",
                static_cast<int>(rng.uniform_int(0, 65535)));
  out += ";; flags: qr rd ra; QUERY: 1, ANSWER: 1, AUTHORITY: 0, ADDITIONAL: 1\n\n";
  out += ";; OPT PSEUDOSECTION:\n; EDNS: version: 0, flags:; udp: 1232\n";
  out += ";; QUESTION SECTION:\n;" + domain + ".\t\t\tIN\tA\n\n";
  out += ";; ANSWER SECTION:\n" + domain + ".\t\t" + std::to_string(rng.uniform_int(1, 300)) + "\tIN\tA\t" +
         std::string(net::kPingTarget) + "\n\n";
  out += format(";; Query time: %d msec\n", static_cast<int>(std::lround(round_trip_ms(s, rng))));
  out += ";; SERVER: " + server + "#53(" + server + ") (UDP)\n";
  out += ";; MSG SIZE  rcvd: 56\n";
  return out;
}

inline std::string render_ip_route(const ScenarioState& s, Rng& rng) {
  std::string out = "### ip route: routing table of the wired host\n";
  if (s.host_interface_down) return out;
  const std::string dev(net::kHostIf);
  if (s.default_route == RouteState::kCorrect) {
    out += "default via " + std::string(net::kGatewayIp) + " dev " + dev + "\n";
  } else if (s.default_route == RouteState::kCorrupt) {
    out += "default via 203.0.113." + std::to_string(rng.uniform_int(1, 254)) + " dev " + dev + " onlink\n";
  }
  out += std::string(net::kSubnet) + " dev " + dev + " proto kernel scope link src " +
         std::string(net::kHostIp) + "\n";
  return out;
}

inline std::string render_ethtool(const ScenarioState& s) {
  const bool up = !s.host_interface_down;
  std::string out = "### ethtool: ethernet link state of the wired host\n";
  out += "Settings for " + std::string(net::kHostIf) + ":\n";
  out +=
      "\tSupported ports: [ TP ]\n"
      "\tSupported link modes:   10baseT/Half 10baseT/Full\n"
      "\t                        100baseT/Half 100baseT/Full\n"
      "\t                        1000baseT/Full\n"
      "\tSupported pause frame use: Symmetric Receive-only\n"
      "\tSupports auto-negotiation: Yes\n"
      "\tSupported FEC modes: Not reported\n"
      "\tAdvertised link modes:  10baseT/Half 10baseT/Full\n"
      "\t                        100baseT/Half 100baseT/Full\n"
      "\t                        1000baseT/Full\n"
      "\tAdvertised pause frame use: Symmetric Receive-only\n"
      "\tAdvertised auto-negotiation: Yes\n"
      "\tAdvertised FEC modes: Not reported\n";
  out += up ? "\tSpeed: 1000Mb/s\n\tDuplex: Full\n" : "\tSpeed: Unknown!\n\tDuplex: Unknown! (255)\n";
  out +=
      "\tAuto-negotiation: on\n"
      "\tPort: Twisted Pair\n"
      "\tPHYAD: 0\n"
      "\tTransceiver: internal\n"
      "\tMDI-X: off (auto)\n"
      "\tSupports Wake-on: umbg\n"
      "\tWake-on: d\n"
      "\tCurrent message level: 0x00000007 (7)\n"
      "\t\t\t       drv probe link\n";
  if (up) {
    out +=
        "\tLink partner advertised link modes:  100baseT/Full\n"
        "\t                                      1000baseT/Full\n"
        "\tLink partner advertised pause frame use: Symmetric Receive-only\n"
        "\tLink partner advertised auto-negotiation: Yes\n"
        "\tLink partner advertised FEC modes: Not reported\n"
        "\tMaster-slave cfg: preferred slave\n"
        "\tMaster-slave status: slave\n";
  }
  out += up ? "\tLink detected: yes\n" : "\tLink detected: no\n";
  return out;
}

/// hostapd rate info is in units of 100 kbit/s (20 MHz HT, short GI).
inline int mcs_for_signal(double signal_dbm) {
  return std::clamp(static_cast<int>(std::floor((signal_dbm + 82.0) / 3.5)), 0, 7);
}

inline std::string render_hostapd(const ScenarioState& s, Rng& rng) {
  static constexpr std::array<int, 8> kRate = {72, 144, 217, 289, 433, 578, 650, 722};
  static constexpr std::array<int, 14> kImageBytes = {48213,  91530,  120877, 164020, 208311,
                                                      251094, 302785, 355410, 401962, 468033,
                                                      512740, 604118, 733295, 861004};
  const int tx_power = static_cast<int>(std::lround(s.ap_tx_power_dbm));
  const double signal = station_signal_dbm(s.station_distance_m, s.ap_tx_power_dbm);

  std::string out = "### hostapd_cli: access point status and associated stations\n";
  out +=
      "hostapd_cli v2.10\n"
      "Copyright (c) 2004-2022, Jouni Malinen <j@w1.fi> and contributors\n"
      "\n"
      "This software may be distributed under the terms of the BSD license.\n"
      "See README for more details.\n"
      "\n"
      "Interactive mode\n"
      "\n";
  out += "state=ENABLED\n";
  out += "max_txpower=" + std::to_string(tx_power) + "\n";

  long long downlink = 0;
  for (int i = 0; i < s.images_downloaded; ++i) {
    downlink += kImageBytes[static_cast<std::size_t>(rng.uniform_int(0, 13))] + 380;
  }
  const long long tx_packets = downlink / 1448 + 2 * s.images_downloaded + rng.uniform_int(0, 12);
  const long long rx_bytes = (tx_packets / 2 + rng.uniform_int(4, 20)) * 66 + 420LL * s.images_downloaded;

  const int mcs = mcs_for_signal(signal);
  const int tx_mcs = std::max(0, mcs - static_cast<int>(rng.uniform_int(0, 1)));
  const int rx_mcs = std::max(0, mcs - static_cast<int>(rng.uniform_int(0, 1)));

  out += std::string(net::kStationMac) + "\n";
  out += "flags=[AUTH][ASSOC][AUTHORIZED][WMM][HT]\n";
  out += "timeout_next=NULLFUNC POLL\n";
  out += "tx_packets=" + std::to_string(tx_packets) + "\n";
  out += "rx_bytes=" + std::to_string(rx_bytes) + "\n";
  out += "tx_bytes=" + std::to_string(downlink) + "\n";
  out += "signal=" + std::to_string(static_cast<int>(std::lround(signal))) + "\n";
  out += format("rx_rate_info=%d mcs %d shortGI\n", kRate[static_cast<std::size_t>(rx_mcs)], rx_mcs);
  out += format("tx_rate_info=%d mcs %d shortGI\n", kRate[static_cast<std::size_t>(tx_mcs)], tx_mcs);
  out += "connected_time=" + std::to_string(rng.uniform_int(30, 3600)) + "\n";
  return out;
}

}  // namespace detail

/// Renders the five tool sections (ping, dig, ip, ethtool, hostapd_cli) in order.
inline LogSample render_sample(const ScenarioState& state, ProblemClass cls, Rng& rng,
                               const ScenarioBands& bands = {}) {
  check_consistent(state, cls, bands);
  LogSample sample;
  sample.label = cls;
  sample.text = detail::render_ping(state, rng);
  sample.text += detail::render_dig(state, rng);
  sample.text += detail::render_ip_route(state, rng);
  sample.text += detail::render_ethtool(state);
  sample.text += detail::render_hostapd(state, rng);
  return sample;
}

/// A sample is a pure function of (class, seed_trace).
inline LogSample generate_sample(ProblemClass cls, std::uint64_t seed_trace, const ScenarioBands& bands = {}) {
  Rng rng(seed_trace);
  const ScenarioState state = sample_scenario(cls, rng, bands);
  LogSample sample = render_sample(state, cls, rng, bands);
  sample.seed_trace = seed_trace;
  return sample;
}

struct SplitFractions {
  double train = 0.7;
  double valid = 0.15;
  double test = 0.15;
};

struct Dataset {
  std::vector<LogSample> train;
  std::vector<LogSample> valid;
  std::vector<LogSample> test;

  std::size_t size() const noexcept { return train.size() + valid.size() + test.size(); }
};

inline Dataset generate_dataset(std::size_t per_class_count, std::uint64_t seed, SplitFractions fractions = {},
                                const ScenarioBands& bands = {}) {
  if (per_class_count < 3) throw ConfigError("per_class_count must be >= 3");
  if (fractions.train <= 0.0 || fractions.valid <= 0.0 || fractions.test <= 0.0 ||
      std::abs(fractions.train + fractions.valid + fractions.test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must be positive and sum to 1");
  }

  std::vector<LogSample> all;
  all.reserve(per_class_count * kNumClasses);
  for (ProblemClass cls : all_classes()) {
    for (std::size_t j = 0; j < per_class_count; ++j) {
      const std::uint64_t index = class_index(cls) * per_class_count + j;
      all.push_back(generate_sample(cls, derive_seed(seed, index), bands));
    }
  }
  Rng shuffler(derive_seed(seed, 0x5eedULL << 40));
  shuffler.shuffle(all);

  const std::size_t total = all.size();
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(total) * fractions.train));
  const auto n_valid = static_cast<std::size_t>(std::llround(static_cast<double>(total) * fractions.valid));
  if (n_train == 0 || n_valid == 0 || n_train + n_valid >= total) {
    throw ConfigError("split fractions leave an empty split");
  }
  Dataset ds;
  ds.train.assign(std::make_move_iterator(all.begin()), std::make_move_iterator(all.begin() + n_train));
  ds.valid.assign(std::make_move_iterator(all.begin() + n_train),
                  std::make_move_iterator(all.begin() + n_train + n_valid));
  ds.test.assign(std::make_move_iterator(all.begin() + n_train + n_valid), std::make_move_iterator(all.end()));
  return ds;
}

// ---- dataset files ----------------------------------------------------------

inline std::string sample_to_json_line(const LogSample& s) {
  nlohmann::json j = {{"text", s.text}, {"label", class_name(s.label)}, {"seed_trace", s.seed_trace}};
  return j.dump();
}

inline LogSample sample_from_json_line(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw CorruptionError(std::string("malformed dataset record: ") + e.what());
  }
  if (!j.is_object() || !j.contains("text") || !j.contains("label") || !j["text"].is_string() ||
      !j["label"].is_string()) {
    throw CorruptionError("dataset record needs string fields text and label");
  }
  const auto label = parse_class(j["label"].get<std::string>());
  if (!label) throw CorruptionError("unknown label " + j["label"].get<std::string>());
  LogSample s;
  s.text = j["text"].get<std::string>();
  s.label = *label;
  if (j.contains("seed_trace")) {
    if (!j["seed_trace"].is_number_unsigned()) throw CorruptionError("seed_trace must be an unsigned integer");
    s.seed_trace = j["seed_trace"].get<std::uint64_t>();
  }
  return s;
}

inline void write_samples(const std::filesystem::path& path, const std::vector<LogSample>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& s : samples) out << sample_to_json_line(s) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

inline std::vector<LogSample> read_samples(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<LogSample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(sample_from_json_line(line));
    } catch (const CorruptionError& e) {
      throw CorruptionError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

struct DatasetFiles {
  static constexpr std::string_view kTrain = "train.jsonl";
  static constexpr std::string_view kValid = "valid.jsonl";
  static constexpr std::string_view kTest = "test.jsonl";
  static constexpr std::string_view kManifest = "manifest.json";
};

inline void write_dataset(const std::filesystem::path& dir, const Dataset& ds, std::size_t per_class_count,
                          std::uint64_t seed, SplitFractions fractions, const ScenarioBands& bands = {}) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_samples(dir / DatasetFiles::kTrain, ds.train);
  write_samples(dir / DatasetFiles::kValid, ds.valid);
  write_samples(dir / DatasetFiles::kTest, ds.test);

  const nlohmann::json manifest = {
      {"generator", kGeneratorVersion},
      {"seed", seed},
      {"per_class_count", per_class_count},
      {"fractions", {{"train", fractions.train}, {"valid", fractions.valid}, {"test", fractions.test}}},
      {"counts", {{"train", ds.train.size()}, {"valid", ds.valid.size()}, {"test", ds.test.size()}}},
      {"ping_probes", net::kPingProbes},
      {"path_loss", {{"reference_db", net::kReferenceLossDb}, {"exponent", net::kPathLossExponent}}},
      {"bands", bands.to_json()},
  };
  std::ofstream out(dir / DatasetFiles::kManifest, std::ios::binary);
  if (!out) throw IoError("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.train = read_samples(dir / DatasetFiles::kTrain);
  ds.valid = read_samples(dir / DatasetFiles::kValid);
  ds.test = read_samples(dir / DatasetFiles::kTest);
  return ds;
}

}  // namespace hnclass
