#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

namespace hnclass {

/// The eleven network states, in the canonical order that defines class indices.
enum class ProblemClass : std::uint8_t {
  kCorruptDefaultRoute,
  kDnsWrongIp,
  kHighDelay,
  kHighJitter,
  kHighPacketLoss,
  kHostInterfaceDown,
  kLowApTxPower,
  kNoDefaultRoute,
  kNormalState,
  kRouterInterfaceDown,
  kStationFarAway,
};

inline constexpr std::size_t kNumClasses = 11;

inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "CORRUPT_DEFAULT_ROUTE", "DNS_WRONG_IP",     "HIGH_DELAY",          "HIGH_JITTER",
    "HIGH_PACKET_LOSS",      "HOST_INTERFACE_DOWN", "LOW_AP_TX_POWER", "NO_DEFAULT_ROUTE",
    "NORMAL_STATE",          "ROUTER_INTERFACE_DOWN", "STATION_FAR_AWAY",
};

inline constexpr std::size_t class_index(ProblemClass c) noexcept { return static_cast<std::size_t>(c); }

inline constexpr ProblemClass class_from_index(std::size_t i) noexcept { return static_cast<ProblemClass>(i); }

inline constexpr std::string_view class_name(ProblemClass c) noexcept { return kClassNames[class_index(c)]; }

inline constexpr std::array<ProblemClass, kNumClasses> all_classes() noexcept {
  std::array<ProblemClass, kNumClasses> out{};
  for (std::size_t i = 0; i < kNumClasses; ++i) out[i] = class_from_index(i);
  return out;
}

/// Accepts the canonical names plus HIGH_LOSS, which some result tables use for HIGH_PACKET_LOSS.
inline std::optional<ProblemClass> parse_class(std::string_view name) noexcept {
  if (name == "HIGH_LOSS") return ProblemClass::kHighPacketLoss;
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    if (kClassNames[i] == name) return class_from_index(i);
  }
  return std::nullopt;
}

}  // namespace hnclass
