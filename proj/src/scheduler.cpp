#include "fugsim/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <queue>
#include <set>
#include <sstream>
#include <stdexcept>

#include "fugsim/metrics.hpp"
#include "fugsim/random.hpp"

namespace fugsim::sched {

namespace {

enum Tag : std::uint64_t {
  kTagChannel = 101,
  kTagPreamble = 102,
  kTagBackoff = 103,
  kTagMiss = 104,
  kTagFalseActive = 105,
  kTagFalseActiveSlot = 106,
  kTagExploreShuffle = 107,
  kTagRandomPolicy = 108,
};

}  // namespace

int SchedulerConfig::reserved_resources() const {
  return static_cast<int>(std::ceil(ra_fraction * resources));
}

void SchedulerConfig::validate() const {
  if (resources < 1)
    throw std::invalid_argument("SchedulerConfig: resources must be >= 1");
  if (exploration_rate < 0.0 || exploration_rate > 1.0)
    throw std::invalid_argument("SchedulerConfig: alpha outside [0,1]");
  if (ra_fraction < 0.0 || ra_fraction >= 1.0)
    throw std::invalid_argument("SchedulerConfig: a outside [0,1)");
  if (margin_slots < 0)
    throw std::invalid_argument("SchedulerConfig: T_m must be >= 0");
  if (ra.preamble_pool < 1 || ra.backoff_window < 1 || ra.handshake_slots < 0)
    throw std::invalid_argument("SchedulerConfig: bad RA parameters");
  if (!(symbol_uses_per_slot > 0.0))
    throw std::invalid_argument("SchedulerConfig: symbol uses must be > 0");
}

Predictions perfect_predictions(const traffic::TrafficTrace& trace) {
  Predictions out;
  out.events.reserve(trace.arrivals.size());
  for (const auto& a : trace.arrivals)
    out.events.push_back(
        {a.slot, a.device,
         static_cast<std::uint8_t>(a.cls == traffic::MarkovState::alarm)});
  return out;
}

Predictions noisy_oracle(const traffic::TrafficTrace& trace,
                         const OracleNoise& noise,
                         std::span<const std::uint8_t> device_alarm_priority,
                         std::uint64_t seed) {
  if (noise.miss_rate < 0.0 || noise.miss_rate > 1.0 ||
      noise.false_active_rate < 0.0 || noise.false_active_rate > 1.0 ||
      noise.bin_slots < 1)
    throw std::invalid_argument("noisy_oracle: bad noise parameters");
  const int devices = trace.config.device_count;
  if (!device_alarm_priority.empty() &&
      static_cast<int>(device_alarm_priority.size()) != devices)
    throw std::invalid_argument("noisy_oracle: priority size mismatch");

  auto priority_of = [&](int device, traffic::MarkovState cls) {
    if (!device_alarm_priority.empty()) return device_alarm_priority[device];
    return static_cast<std::uint8_t>(cls == traffic::MarkovState::alarm);
  };

  Predictions out;
  out.device_alarm_priority.assign(device_alarm_priority.begin(),
                                   device_alarm_priority.end());
  for (const auto& a : trace.arrivals) {
    const double u = rng::keyed_uniform(seed, kTagMiss, a.device, a.slot);
    if (u < noise.miss_rate) continue;  // false silent
    out.events.push_back({a.slot, a.device, priority_of(a.device, a.cls)});
  }

  const int slots = trace.config.slot_count();
  const int bins = (slots + noise.bin_slots - 1) / noise.bin_slots;
  for (int d = 0; d < devices; ++d) {
    for (int b = 0; b < bins; ++b) {
      const double u = rng::keyed_uniform(seed, kTagFalseActive, d, b);
      if (u >= noise.false_active_rate) continue;
      const int offset = static_cast<int>(
          rng::keyed_uniform(seed, kTagFalseActiveSlot, d, b) *
          noise.bin_slots);
      const int slot = std::min(b * noise.bin_slots + offset, slots - 1);
      out.events.push_back(
          {slot, d, priority_of(d, traffic::MarkovState::data)});
    }
  }
  std::sort(out.events.begin(), out.events.end(),
            [](const PredictionEvent& x, const PredictionEvent& y) {
              return x.slot != y.slot ? x.slot < y.slot
                                      : x.device < y.device;
            });
  return out;
}

namespace {

struct TxEnd {
  std::int32_t resource;
  std::int32_t device;
  GrantCategory category;
};

struct MarginCheck {
  std::int32_t device;
  std::int32_t packet;
};

// Mutable per-run state shared by the policy variants.
struct Runner {
  const traffic::TrafficTrace& trace;
  const SchedulerConfig& cfg;
  AllocationLog& log;
  int slots;
  int devices;
  int reserved_cap;
  double snr_linear;

  std::vector<std::deque<std::int32_t>> queue;  // packet indices
  std::vector<std::uint8_t> busy;
  std::vector<std::uint8_t> candidate;  // 0 none, 1 data, 2 alarm
  std::vector<std::uint8_t> ra_state;   // 0 idle, 1 contending, 2 handshake, 3 queued
  std::set<std::pair<std::int32_t, std::int32_t>> cand_alarm, cand_data;
  std::deque<std::int32_t> ra_grant_queue;

  std::vector<std::vector<std::int32_t>> ra_attempt_at;
  std::vector<std::vector<std::int32_t>> handshake_done_at;
  std::vector<std::vector<TxEnd>> tx_end_at;
  std::vector<std::vector<MarginCheck>> margin_at;

  std::priority_queue<int, std::vector<int>, std::greater<int>> free_indices;
  int in_flight = 0;
  int busy_predictive = 0, busy_reserved = 0, busy_exploration = 0,
      busy_random = 0;

  std::vector<std::int32_t> rotation;
  std::size_t rotation_pos = 0;
  std::uint64_t rotation_epoch = 0;

  Runner(const traffic::TrafficTrace& t, const SchedulerConfig& c,
         AllocationLog& l)
      : trace(t),
        cfg(c),
        log(l),
        slots(t.config.slot_count()),
        devices(t.config.device_count),
        reserved_cap(c.policy == Policy::gbra ? c.resources
                     : c.policy == Policy::genie
                         ? 0
                         : c.reserved_resources()),
        snr_linear(std::pow(10.0, c.snr_db / 10.0)),
        queue(devices),
        busy(devices, 0),
        candidate(devices, 0),
        ra_state(devices, 0),
        ra_attempt_at(slots),
        handshake_done_at(slots),
        tx_end_at(slots + 1),
        margin_at(slots) {
    for (int r = 0; r < c.resources; ++r) free_indices.push(r);
    rotation.resize(devices);
    reshuffle_rotation();
  }

  void reshuffle_rotation() {
    for (int i = 0; i < devices; ++i) rotation[i] = i;
    for (int i = devices - 1; i > 0; --i) {
      const std::uint64_t bits = rng::keyed_bits(
          cfg.seed, kTagExploreShuffle, rotation_epoch, i);
      std::swap(rotation[i], rotation[bits % (i + 1)]);
    }
    rotation_pos = 0;
    ++rotation_epoch;
  }

  int available(int wastes) const {
    return cfg.resources - in_flight - wastes;
  }

  void add_candidate(std::int32_t device, std::int32_t key_slot,
                     bool alarm) {
    if (candidate[device]) return;
    candidate[device] = alarm ? 2 : 1;
    (alarm ? cand_alarm : cand_data).insert({key_slot, device});
  }

  std::uint8_t device_priority(std::int32_t device) const {
    const auto& prio = log_predictions->device_alarm_priority;
    if (!prio.empty()) return prio[device];
    // Fall back to the class of the next pending packet.
    if (!queue[device].empty())
      return log.packets[queue[device].front()].cls;
    return 0;
  }

  const Predictions* log_predictions = nullptr;

  int& busy_counter(GrantCategory cat) {
    switch (cat) {
      case GrantCategory::predictive: return busy_predictive;
      case GrantCategory::reserved_ra: return busy_reserved;
      case GrantCategory::exploration: return busy_exploration;
      default: return busy_random;
    }
  }

  // Serves the head packet of a device known to have one. Returns the
  // transmission duration in slots.
  void start_transmission(std::int32_t device, int slot,
                          GrantCategory cat) {
    const std::int32_t pkt_idx = queue[device].front();
    queue[device].pop_front();
    PacketLog& pkt = log.packets[pkt_idx];

    const double u =
        rng::keyed_uniform(cfg.seed, kTagChannel, device, slot);
    const double h_sq = rng::exponential_from_uniform(u);
    const double rate =
        metrics::rate_bits({snr_linear, h_sq});
    const double bytes_per_slot = rate * cfg.symbol_uses_per_slot / 8.0;
    long duration;
    if (bytes_per_slot > 0.0)
      duration = static_cast<long>(
          std::ceil(static_cast<double>(pkt.bytes) / bytes_per_slot));
    else
      duration = slots + 1;
    duration = std::max<long>(1, std::min<long>(duration, slots + 1));

    pkt.grant_slot = slot;
    pkt.duration_slots = static_cast<std::int32_t>(duration);
    pkt.rate_bits = rate;
    pkt.category = cat;
    const long end = slot + duration;
    pkt.completed = end <= slots ? 1 : 0;

    const int resource = free_indices.top();
    free_indices.pop();
    busy[device] = 1;
    ++in_flight;
    ++busy_counter(cat);
    if (end <= slots)
      tx_end_at[end].push_back({resource, device, cat});
    const EventKind kind = cat == GrantCategory::exploration
                               ? EventKind::exploration
                               : EventKind::grant;
    log.events.push_back({slot, device, resource, kind});
  }

  void finish_transmissions(int slot) {
    for (const TxEnd& end : tx_end_at[slot]) {
      free_indices.push(end.resource);
      busy[end.device] = 0;
      --in_flight;
      --busy_counter(end.category);
      if (queue[end.device].empty()) continue;
      if (cfg.policy == Policy::fug || cfg.policy == Policy::genie) {
        // Buffer status learned from the finished transmission: keep the
        // device in the allocation loop for its remaining backlog.
        const PacketLog& next = log.packets[queue[end.device].front()];
        const bool alarm = cfg.policy == Policy::genie
                               ? next.cls == 1
                               : device_priority(end.device) == 1;
        add_candidate(end.device, next.ready_slot, alarm);
      } else if (cfg.policy == Policy::gbra) {
        start_contention(end.device, slot);
      }
    }
  }

  void start_contention(std::int32_t device, int slot) {
    if (slot >= slots) return;
    ra_state[device] = 1;
    ra_attempt_at[slot].push_back(device);
  }

  void process_ra(int slot) {
    // Preamble contention among this slot's attempts.
    auto& contenders = ra_attempt_at[slot];
    if (!contenders.empty()) {
      std::vector<std::int32_t> active;
      active.reserve(contenders.size());
      for (std::int32_t dev : contenders) {
        if (ra_state[dev] != 1) continue;
        if (busy[dev] || queue[dev].empty()) {
          ra_state[dev] = 0;  // served meanwhile
          continue;
        }
        if (candidate[dev]) {
          ra_state[dev] = 0;  // a later prediction covers it
          continue;
        }
        active.push_back(dev);
      }
      std::vector<int> picks(active.size());
      std::vector<int> count(cfg.ra.preamble_pool, 0);
      for (std::size_t i = 0; i < active.size(); ++i) {
        picks[i] = static_cast<int>(
            rng::keyed_bits(cfg.seed, kTagPreamble, active[i], slot) %
            static_cast<std::uint64_t>(cfg.ra.preamble_pool));
        ++count[picks[i]];
      }
      for (std::size_t i = 0; i < active.size(); ++i) {
        const std::int32_t dev = active[i];
        ++log.ra_attempts;
        if (count[picks[i]] == 1) {
          const int done = slot + cfg.ra.handshake_slots;
          ra_state[dev] = 2;
          if (done < slots)
            handshake_done_at[done].push_back(dev);
          // else the handshake outlives the run; packet stays pending
        } else {
          ++log.collisions;
          log.events.push_back({slot, dev, -1, EventKind::collision});
          const int next =
              slot + 1 +
              static_cast<int>(
                  rng::keyed_bits(cfg.seed, kTagBackoff, dev, slot) %
                  static_cast<std::uint64_t>(cfg.ra.backoff_window));
          log.events.push_back({slot, dev, -1, EventKind::backoff});
          if (next < slots)
            ra_attempt_at[next].push_back(dev);
          else
            ra_state[dev] = 1;  // stranded contender
        }
      }
    }
    for (std::int32_t dev : handshake_done_at[slot]) {
      if (ra_state[dev] != 2) continue;
      ra_state[dev] = 3;
      ra_grant_queue.push_back(dev);
    }
  }
};

}  // namespace

AllocationLog run_policy(const traffic::TrafficTrace& trace,
                         const Predictions& predictions,
                         const SchedulerConfig& config) {
  config.validate();
  const int slots = trace.config.slot_count();
  const int devices = trace.config.device_count;
  for (const auto& e : predictions.events)
    if (e.slot < 0 || e.slot >= slots || e.device < 0 ||
        e.device >= devices)
      throw std::invalid_argument(
          "run_policy: prediction outside the trace slot/device range");
  if (!predictions.device_alarm_priority.empty() &&
      static_cast<int>(predictions.device_alarm_priority.size()) != devices)
    throw std::invalid_argument("run_policy: priority size mismatch");

  AllocationLog log;
  log.policy = config.policy;
  log.resources = config.resources;
  log.seed = config.seed;
  log.slot_duration_s = trace.config.slot_duration_s;
  log.slot_count = slots;
  log.slots.resize(slots);

  // One packet record per arrival.
  std::vector<std::vector<std::int32_t>> arrivals_at(slots);
  for (std::size_t i = 0; i < trace.arrivals.size(); ++i) {
    const auto& a = trace.arrivals[i];
    const std::int64_t per_packet = a.bytes / a.count;
    for (int k = 0; k < a.count; ++k) {
      PacketLog pkt;
      pkt.device = a.device;
      pkt.cls = a.cls == traffic::MarkovState::alarm ? 1 : 0;
      pkt.bytes = per_packet;
      pkt.ready_slot = a.slot;
      arrivals_at[a.slot].push_back(
          static_cast<std::int32_t>(log.packets.size()));
      log.packets.push_back(pkt);
    }
  }

  Runner run(trace, config, log);
  run.log_predictions = &predictions;

  const bool predictive_policy =
      config.policy == Policy::fug || config.policy == Policy::genie;
  const double alpha =
      config.policy == Policy::genie ? 0.0 : config.exploration_rate;
  std::size_t event_cursor = 0;

  for (int slot = 0; slot < slots; ++slot) {
    int waste_predictive = 0, waste_exploration = 0, waste_random = 0;

    run.finish_transmissions(slot);

    if (predictive_policy) {
      while (event_cursor < predictions.events.size() &&
             predictions.events[event_cursor].slot == slot) {
        const auto& e = predictions.events[event_cursor++];
        run.add_candidate(e.device, e.slot, e.alarm_priority == 1);
      }
    } else {
      while (event_cursor < predictions.events.size() &&
             predictions.events[event_cursor].slot == slot)
        ++event_cursor;
    }

    for (std::int32_t pkt_idx : arrivals_at[slot]) {
      const PacketLog& pkt = log.packets[pkt_idx];
      const std::int32_t dev = pkt.device;
      run.queue[dev].push_back(pkt_idx);
      if (config.policy == Policy::gbra) {
        if (run.ra_state[dev] == 0 && !run.busy[dev])
          run.start_contention(dev, slot);
      } else if (config.policy == Policy::fug) {
        const bool covered = run.candidate[dev] || run.busy[dev] ||
                             run.ra_state[dev] != 0;
        if (!covered) {
          ++log.margin_waits;
          log.events.push_back({slot, dev, -1, EventKind::margin_wait});
          const int deadline = slot + config.margin_slots;
          if (deadline < slots)
            run.margin_at[deadline].push_back({dev, pkt_idx});
        }
      }
    }

    if (config.policy == Policy::fug) {
      for (const MarginCheck& check : run.margin_at[slot]) {
        if (log.packets[check.packet].grant_slot >= 0) continue;
        const std::int32_t dev = check.device;
        if (run.candidate[dev] || run.busy[dev] || run.ra_state[dev] != 0)
          continue;
        log.events.push_back({slot, dev, -1, EventKind::ra_fallback});
        run.start_contention(dev, slot);
      }
    }

    if (config.policy == Policy::fug || config.policy == Policy::gbra)
      run.process_ra(slot);

    // Grant phase. Reserved RA pool first, then prediction-driven
    // grants, then exploration of unpredicted devices.
    if (config.policy == Policy::random) {
      int grants = std::min(run.available(0), devices);
      if (grants > 0) {
        // Partial Fisher-Yates over the device ids.
        static thread_local std::vector<std::int32_t> pool;
        pool.resize(devices);
        for (int i = 0; i < devices; ++i) pool[i] = i;
        for (int g = 0; g < grants; ++g) {
          const std::uint64_t bits = rng::keyed_bits(
              config.seed, kTagRandomPolicy, slot, g);
          const int j = g + static_cast<int>(
                                bits % static_cast<std::uint64_t>(
                                           devices - g));
          std::swap(pool[g], pool[j]);
          const std::int32_t dev = pool[g];
          if (!run.busy[dev] && !run.queue[dev].empty())
            run.start_transmission(dev, slot, GrantCategory::random);
          else
            ++waste_random;
        }
      }
    } else {
      // Reserved pool for RA-completed devices (all of R under GB-RA).
      int ra_room = std::min(run.available(0),
                             run.reserved_cap - run.busy_reserved);
      std::deque<std::int32_t> deferred;
      while (ra_room > 0 && !run.ra_grant_queue.empty()) {
        const std::int32_t dev = run.ra_grant_queue.front();
        run.ra_grant_queue.pop_front();
        if (run.queue[dev].empty()) {
          run.ra_state[dev] = 0;
          continue;
        }
        if (run.busy[dev]) {
          deferred.push_back(dev);
          continue;
        }
        run.ra_state[dev] = 0;
        run.start_transmission(dev, slot, GrantCategory::reserved_ra);
        --ra_room;
      }
      for (auto it = deferred.rbegin(); it != deferred.rend(); ++it)
        run.ra_grant_queue.push_front(*it);

      if (predictive_policy) {
        const int predictive_cap = config.resources - run.reserved_cap;
        int room = std::min(
            run.available(waste_predictive),
            predictive_cap - run.busy_predictive - waste_predictive);
        for (auto* set : {&run.cand_alarm, &run.cand_data}) {
          auto it = set->begin();
          while (it != set->end() && room > 0) {
            const std::int32_t dev = it->second;
            if (run.busy[dev]) {
              ++it;  // already serving an earlier packet
              continue;
            }
            it = set->erase(it);
            run.candidate[dev] = 0;
            if (!run.queue[dev].empty()) {
              run.start_transmission(dev, slot, GrantCategory::predictive);
            } else {
              // False active: the BS senses the unused resource and
              // flips the stored activity bit.
              ++waste_predictive;
              ++log.corrections;
              log.events.push_back({slot, dev, -1, EventKind::correction});
            }
            --room;
          }
        }

        if (alpha > 0.0) {
          const int reserved_headroom =
              std::max(0, run.reserved_cap - run.busy_reserved);
          const int unused = std::max(
              0, run.available(waste_predictive + waste_exploration) -
                     reserved_headroom);
          int budget = static_cast<int>(std::floor(alpha * unused));
          int scanned = 0;
          while (budget > 0 && scanned < devices) {
            if (run.rotation_pos >= run.rotation.size())
              run.reshuffle_rotation();
            const std::int32_t dev = run.rotation[run.rotation_pos++];
            ++scanned;
            if (run.busy[dev] || run.candidate[dev]) continue;
            if (!run.queue[dev].empty()) {
              run.start_transmission(dev, slot,
                                     GrantCategory::exploration);
              ++log.exploration_grants;
            } else {
              ++waste_exploration;
            }
            --budget;
          }
        }
      }
    }

    SlotTally& tally = log.slots[slot];
    tally.predictive = run.busy_predictive + waste_predictive;
    tally.reserved = run.busy_reserved;
    tally.exploration = run.busy_exploration + waste_exploration;
    tally.unused = config.resources - tally.predictive - tally.reserved -
                   tally.exploration - (run.busy_random + waste_random);
  }

  return log;
}

RunSummary summarize(const AllocationLog& log) {
  RunSummary s;
  s.policy = log.policy;
  s.resources = log.resources;
  s.seed = log.seed;
  s.collisions = log.collisions;
  double delay_sum = 0.0;
  long granted = 0;
  const double slot_ms = log.slot_duration_s * 1e3;
  for (const auto& pkt : log.packets) {
    if (pkt.grant_slot >= 0) {
      const double delay =
          static_cast<double>(pkt.grant_slot - pkt.ready_slot) * slot_ms;
      delay_sum += delay;
      s.max_delay_ms = std::max(s.max_delay_ms, delay);
      ++granted;
    }
    if (pkt.completed) {
      s.total_bytes += pkt.bytes;
      ++s.delivered_packets;
    } else {
      ++s.stranded_packets;
    }
  }
  s.mean_delay_ms = granted > 0 ? delay_sum / granted : 0.0;
  return s;
}

void write_events_csv(const AllocationLog& log, std::ostream& out) {
  out << "slot,device_id,resource,event\n";
  for (const auto& e : log.events)
    out << e.slot << ',' << e.device << ',' << e.resource << ','
        << to_string(e.kind) << '\n';
}

namespace {
const char* category_name(GrantCategory cat) {
  switch (cat) {
    case GrantCategory::predictive: return "predictive";
    case GrantCategory::reserved_ra: return "reserved_ra";
    case GrantCategory::exploration: return "exploration";
    case GrantCategory::random: return "random";
    default: return "none";
  }
}
}  // namespace

void write_packets_csv(const AllocationLog& log, std::ostream& out) {
  out.precision(17);
  out << "device_id,class,bytes,ready_slot,grant_slot,duration_slots,"
         "completed,category,rate_bits\n";
  for (const auto& pkt : log.packets)
    out << pkt.device << ',' << (pkt.cls ? "alarm" : "data") << ','
        << pkt.bytes << ',' << pkt.ready_slot << ',' << pkt.grant_slot
        << ',' << pkt.duration_slots << ',' << int(pkt.completed) << ','
        << category_name(pkt.category) << ',' << pkt.rate_bits << '\n';
}

RunSummary summarize_packets_csv(std::istream& in, Policy policy,
                                 int resources, std::uint64_t seed,
                                 double slot_duration_s, long collisions) {
  AllocationLog log;
  log.policy = policy;
  log.resources = resources;
  log.seed = seed;
  log.slot_duration_s = slot_duration_s;
  log.collisions = collisions;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("device_id", 0) == 0) continue;
    std::istringstream row(line);
    PacketLog pkt;
    std::string field;
    auto next = [&](const char* what) {
      if (!std::getline(row, field, ','))
        throw std::runtime_error(std::string("packets csv: missing ") +
                                 what + " at line " +
                                 std::to_string(line_no));
      return field;
    };
    pkt.device = std::stoi(next("device"));
    pkt.cls = next("class") == "alarm" ? 1 : 0;
    pkt.bytes = std::stoll(next("bytes"));
    pkt.ready_slot = std::stoi(next("ready_slot"));
    pkt.grant_slot = std::stoi(next("grant_slot"));
    pkt.duration_slots = std::stoi(next("duration_slots"));
    pkt.completed = std::stoi(next("completed")) ? 1 : 0;
    next("category");
    pkt.rate_bits = std::stod(next("rate_bits"));
    log.packets.push_back(pkt);
  }
  return summarize(log);
}

const char* to_string(Policy policy) {
  switch (policy) {
    case Policy::fug: return "fug";
    case Policy::genie: return "genie";
    case Policy::random: return "random";
    case Policy::gbra: return "gbra";
  }
  return "fug";
}

Policy policy_from_string(const std::string& name) {
  if (name == "fug") return Policy::fug;
  if (name == "genie") return Policy::genie;
  if (name == "random") return Policy::random;
  if (name == "gbra") return Policy::gbra;
  throw std::invalid_argument("unknown policy: " + name);
}

const char* to_string(EventKind kind) {
  switch (kind) {
    case EventKind::grant: return "grant";
    case EventKind::collision: return "collision";
    case EventKind::backoff: return "backoff";
    case EventKind::margin_wait: return "margin_wait";
    case EventKind::ra_fallback: return "ra_fallback";
    case EventKind::exploration: return "exploration";
    case EventKind::correction: return "correction";
  }
  return "grant";
}

}  // namespace fugsim::sched
