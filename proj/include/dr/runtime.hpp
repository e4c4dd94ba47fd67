#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "dr/subproblem.hpp"

namespace dr {

// One price broadcast. anchor >= 0 tells every agent to reset its deviation
// reference x_prev to its own round-`anchor` net demand before solving (used
// when the plain-gradient phase re-anchors at the best fast-gradient round);
// anchor == -1 keeps the default reference, the agent's previous round.
struct Broadcast {
  int k = 0;                   // 1-based round index
  double mu = 0.0;
  double nu = 0.0;
  int anchor = -1;
  std::vector<double> prices;  // $/kWh, length T
};

// What an agent sends back. Deliberately narrow: the coordinator never sees
// device schedules, only the aggregate value / net demand / dissatisfaction.
struct RoundReply {
  double value = 0.0;                  // household optimal objective
  std::vector<double> net_demand;     // kWh per slot
  double dissatisfaction = 0.0;        // $ over the horizon
};

class ProtocolError : public std::runtime_error {
 public:
  explicit ProtocolError(const std::string& what) : std::runtime_error(what) {}
};

// Round wall-clock budget blown. Separate type so callers can exit with a
// distinct status.
class BudgetError : public ProtocolError {
 public:
  explicit BudgetError(const std::string& what) : ProtocolError(what) {}
};

// Round-based coordination boundary. round() blocks until every household
// has answered and returns replies in ascending household order; all
// downstream reductions iterate that order, so results do not depend on the
// evaluation schedule.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual int num_households() const = 0;
  virtual std::vector<RoundReply> round(const Broadcast& b) = 0;
};

// Agents living in this process. Each household keeps its net-demand archive
// for the deviation penalty exactly like a remote agent would. parallel=true
// evaluates households over OpenMP; replies are written by household index,
// so the two modes are bit-identical.
class InProcessTransport : public Transport {
 public:
  InProcessTransport(const Scenario& sc, const MiqpOptions& opts,
                     bool parallel = false);
  ~InProcessTransport() override;

  int num_households() const override;
  std::vector<RoundReply> round(const Broadcast& b) override;

  // Device schedules from the most recent round (coordination never needs
  // them; run summaries and tests do).
  const std::vector<ScheduleSolution>& last_schedules() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Host the scenario's agents on a listening socket until the peer says BYE
// or disconnects. Handles one coordinator at a time. dump_dir, if nonempty,
// receives per-household schedule files for the last completed round.
// Returns the number of rounds served.
int serve_agents(const Scenario& sc, const MiqpOptions& opts, int port,
                 const std::string& dump_dir = "");

// Coordinator side of the wire protocol (see docs/wire_protocol.md).
// Numbers cross the socket with 17 significant digits, so a loopback run
// reproduces the in-process trace byte for byte. round() enforces a
// wall-clock budget; a slow or lost peer aborts the run.
class SocketTransport : public Transport {
 public:
  SocketTransport(const std::string& host, int port,
                  double round_budget_sec = 60.0);
  ~SocketTransport() override;

  int num_households() const override;
  std::vector<RoundReply> round(const Broadcast& b) override;
  void bye();  // polite shutdown; destructor calls it too

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace dr
