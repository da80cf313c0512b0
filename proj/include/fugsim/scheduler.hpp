#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fugsim/traffic.hpp"

namespace fugsim::sched {

enum class Policy : std::uint8_t { fug = 0, genie = 1, random = 2, gbra = 3 };

struct RaConfig {
  int preamble_pool = 54;
  int backoff_window = 20;   // slots
  int handshake_slots = 4;   // one per message of the four-handshake
};

struct SchedulerConfig {
  int resources = 10;
  double exploration_rate = 0.1;  // alpha
  double ra_fraction = 0.1;       // a, reserved for RA fallback
  int margin_slots = 20;          // T_m
  Policy policy = Policy::fug;
  RaConfig ra;
  double snr_db = 10.0;
  double symbol_uses_per_slot = 15000.0;
  std::uint64_t seed = 1;

  int reserved_resources() const;  // ceil(a * R)
  void validate() const;
};

// A device forecast to become active at a slot, with the priority class
// the base station believes it has.
struct PredictionEvent {
  std::int32_t slot = 0;
  std::int32_t device = 0;
  std::uint8_t alarm_priority = 0;
};

struct Predictions {
  std::vector<PredictionEvent> events;  // sorted by (slot, device)
  // Per-device classifier verdict used when re-queueing a device whose
  // backlog outlives its first grant; empty means use true classes.
  std::vector<std::uint8_t> device_alarm_priority;
};

// Genie feed: one event per device-slot arrival with the true class.
Predictions perfect_predictions(const traffic::TrafficTrace& trace);

// Emulates an imperfect activity predictor at trace scale: each arrival
// is missed with miss_rate, and each silent device-bin raises a spurious
// active flag with false_active_rate.
struct OracleNoise {
  double miss_rate = 0.06;
  double false_active_rate = 0.05;
  int bin_slots = 1000;
};
Predictions noisy_oracle(const traffic::TrafficTrace& trace,
                         const OracleNoise& noise,
                         std::span<const std::uint8_t> device_alarm_priority,
                         std::uint64_t seed);

enum class EventKind : std::uint8_t {
  grant = 0,
  collision = 1,
  backoff = 2,
  margin_wait = 3,
  ra_fallback = 4,
  exploration = 5,
  correction = 6,
};

enum class GrantCategory : std::uint8_t {
  predictive = 0,
  reserved_ra = 1,
  exploration = 2,
  random = 3,
  none = 255,
};

struct LogEvent {
  std::int32_t slot = 0;
  std::int32_t device = 0;
  std::int32_t resource = -1;
  EventKind kind = EventKind::grant;
};

struct PacketLog {
  std::int32_t device = 0;
  std::uint8_t cls = 0;  // 1 = alarm
  std::int64_t bytes = 0;
  std::int32_t ready_slot = 0;
  std::int32_t grant_slot = -1;  // -1 = never granted within the run
  std::int32_t duration_slots = 0;
  std::uint8_t completed = 0;
  GrantCategory category = GrantCategory::none;
  double rate_bits = 0.0;
};

// Per-slot resource accounting; waste grants (allocated but unused by a
// silent device) are included in their category.
struct SlotTally {
  std::int32_t predictive = 0;
  std::int32_t reserved = 0;
  std::int32_t exploration = 0;
  std::int32_t unused = 0;
};

struct AllocationLog {
  Policy policy = Policy::fug;
  int resources = 0;
  std::uint64_t seed = 0;
  double slot_duration_s = 1e-3;
  int slot_count = 0;
  std::vector<PacketLog> packets;
  std::vector<LogEvent> events;  // state-changing events only
  std::vector<SlotTally> slots;
  long collisions = 0;
  long ra_attempts = 0;
  long margin_waits = 0;
  long exploration_grants = 0;
  long corrections = 0;  // false-active flips sensed by the BS
};

// Slot loop applying the configured policy to the trace. Deterministic
// given config.seed. Throws std::invalid_argument if predictions refer
// to slots or devices outside the trace.
AllocationLog run_policy(const traffic::TrafficTrace& trace,
                         const Predictions& predictions,
                         const SchedulerConfig& config);

struct RunSummary {
  Policy policy = Policy::fug;
  int resources = 0;
  std::uint64_t seed = 0;
  long total_bytes = 0;  // bytes of transmissions completed within the run
  double mean_delay_ms = 0.0;
  double max_delay_ms = 0.0;
  long collisions = 0;
  long delivered_packets = 0;
  long stranded_packets = 0;
};

RunSummary summarize(const AllocationLog& log);

// slot,device_id,resource,event rows.
void write_events_csv(const AllocationLog& log, std::ostream& out);
// Per-packet records; enough to recompute the summary exactly.
void write_packets_csv(const AllocationLog& log, std::ostream& out);
RunSummary summarize_packets_csv(std::istream& in, Policy policy,
                                 int resources, std::uint64_t seed,
                                 double slot_duration_s, long collisions);

const char* to_string(Policy policy);
Policy policy_from_string(const std::string& name);
const char* to_string(EventKind kind);

}  // namespace fugsim::sched
