#include "dr/runtime.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "dr/subproblem.hpp"

namespace dr {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string clip(const std::string& line) {
  if (line.size() <= 160) return line;
  return line.substr(0, 160) + "...";
}

// ---- agent pool shared by the in-process transport and the socket server

struct AgentPool {
  std::vector<HouseholdModel> models;
  MiqpOptions opts;
  bool parallel = false;
  int T = 0;
  // net-demand archive per household, keyed by round index; the deviation
  // reference for round k is archive[anchor >= 0 ? anchor : k-1]
  std::vector<std::map<int, std::vector<double>>> archive;
  std::vector<ScheduleSolution> schedules;

  AgentPool(const Scenario& sc, const MiqpOptions& o, bool par)
      : opts(o), parallel(par), T(sc.horizon.num_slots) {
    models.reserve(sc.households.size());
    for (const auto& hh : sc.households)
      models.emplace_back(sc.horizon, sc.environment, hh);
    archive.resize(models.size());
    schedules.resize(models.size());
  }

  std::vector<RoundReply> round(const Broadcast& b) {
    const int I = (int)models.size();
    if ((int)b.prices.size() != T)
      throw ProtocolError("broadcast carries " +
                          std::to_string(b.prices.size()) + " prices, horizon has " +
                          std::to_string(T) + " slots");
    if (b.k < 1) throw ProtocolError("round index must be >= 1");

    std::vector<SmoothedQuery> queries(I);
    for (int i = 0; i < I; ++i) {
      SmoothedQuery& q = queries[i];
      q.prices = b.prices;
      q.mu = b.mu;
      q.nu = b.nu;
      if (b.nu != 0.0) {
        int ref = b.anchor >= 0 ? b.anchor : b.k - 1;
        auto it = archive[i].find(ref);
        if (it == archive[i].end())
          throw ProtocolError("household " +
                              std::to_string(models[i].household().id) +
                              " has no archived demand for round " +
                              std::to_string(ref));
        q.x_prev = it->second;
      }
    }

    std::vector<RoundReply> replies(I);
    std::vector<AgentResponse> responses(I);
    std::string failure;
#pragma omp parallel for schedule(dynamic) if (parallel)
    for (int i = 0; i < I; ++i) {
      try {
        responses[i] = models[i].solve(queries[i], opts);
      } catch (const std::exception& e) {
#pragma omp critical
        if (failure.empty())
          failure = "household " + std::to_string(models[i].household().id) +
                    ": " + e.what();
      }
    }
    if (!failure.empty()) throw std::runtime_error(failure);

    for (int i = 0; i < I; ++i) {
      replies[i].value = responses[i].value;
      replies[i].net_demand = responses[i].net_demand;
      replies[i].dissatisfaction = responses[i].dissatisfaction_total;
      archive[i][b.k] = responses[i].net_demand;
      schedules[i] = std::move(responses[i].schedule);
    }
    return replies;
  }
};

// ---- newline-framed channel over a connected socket

struct LineChannel {
  int fd = -1;
  std::string buf;

  ~LineChannel() { close_fd(); }
  void close_fd() {
    if (fd >= 0) ::close(fd);
    fd = -1;
  }

  void write_all(const std::string& s) {
    size_t off = 0;
    while (off < s.size()) {
      ssize_t n = ::send(fd, s.data() + off, s.size() - off, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError(std::string("send failed: ") + std::strerror(errno));
      }
      off += (size_t)n;
    }
  }

  // One line without its '\n'. deadline: steady_clock time point; infinite
  // when in the past-proof default. false = orderly EOF before any byte.
  bool read_line(std::string& line,
                 std::chrono::steady_clock::time_point deadline,
                 bool has_deadline) {
    for (;;) {
      size_t nl = buf.find('\n');
      if (nl != std::string::npos) {
        line.assign(buf, 0, nl);
        buf.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
      }
      if (has_deadline) {
        auto now = std::chrono::steady_clock::now();
        if (now >= deadline) throw BudgetError("round wall-clock budget exceeded");
        int ms = (int)std::chrono::duration_cast<std::chrono::milliseconds>(
                     deadline - now).count() + 1;
        struct pollfd pf{fd, POLLIN, 0};
        int pr = ::poll(&pf, 1, ms);
        if (pr < 0) {
          if (errno == EINTR) continue;
          throw ProtocolError(std::string("poll failed: ") + std::strerror(errno));
        }
        if (pr == 0) throw BudgetError("round wall-clock budget exceeded");
      }
      char chunk[4096];
      ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError(std::string("recv failed: ") + std::strerror(errno));
      }
      if (n == 0) {
        if (buf.empty()) return false;
        throw ProtocolError("connection closed mid-line: '" + clip(buf) + "'");
      }
      buf.append(chunk, (size_t)n);
    }
  }
};

std::vector<std::string> tokens_of(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string t;
  while (is >> t) out.push_back(t);
  return out;
}

double parse_num(const std::string& tok, const std::string& line) {
  const char* s = tok.c_str();
  char* end = nullptr;
  double v = std::strtod(s, &end);
  if (end == s || *end != '\0')
    throw ProtocolError("bad number '" + tok + "' in: '" + clip(line) + "'");
  return v;
}

int parse_int(const std::string& tok, const std::string& line) {
  const char* s = tok.c_str();
  char* end = nullptr;
  long v = std::strtol(s, &end, 10);
  if (end == s || *end != '\0')
    throw ProtocolError("bad integer '" + tok + "' in: '" + clip(line) + "'");
  return (int)v;
}

void dump_schedules(const AgentPool& pool, const std::string& dir) {
  for (size_t i = 0; i < pool.models.size(); ++i) {
    const ScheduleSolution& s = pool.schedules[i];
    if (s.net_demand.empty()) continue;  // never solved a round
    nlohmann::json j;
    j["id"] = pool.models[i].household().id;
    j["net_demand"] = s.net_demand;
    nlohmann::json devs = nlohmann::json::array();
    for (const auto& d : s.devices) {
      nlohmann::json dj;
      dj["x"] = d.x;
      if (!d.soc.empty()) dj["soc"] = d.soc;
      if (!d.t_in.empty()) dj["t_in"] = d.t_in;
      devs.push_back(std::move(dj));
    }
    j["devices"] = std::move(devs);
    std::string path = dir + "/household_" +
                       std::to_string(pool.models[i].household().id) + ".json";
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << j.dump(2) << '\n';
  }
}

}  // namespace

// ---- in-process transport

struct InProcessTransport::Impl {
  AgentPool pool;
  Impl(const Scenario& sc, const MiqpOptions& o, bool par) : pool(sc, o, par) {}
};

InProcessTransport::InProcessTransport(const Scenario& sc,
                                       const MiqpOptions& opts, bool parallel)
    : impl_(new Impl(sc, opts, parallel)) {}
InProcessTransport::~InProcessTransport() = default;

int InProcessTransport::num_households() const {
  return (int)impl_->pool.models.size();
}

std::vector<RoundReply> InProcessTransport::round(const Broadcast& b) {
  return impl_->pool.round(b);
}

const std::vector<ScheduleSolution>& InProcessTransport::last_schedules() const {
  return impl_->pool.schedules;
}

// ---- socket server hosting the scenario's agents

int serve_agents(const Scenario& sc, const MiqpOptions& opts, int port,
                 const std::string& dump_dir) {
  AgentPool pool(sc, opts, false);
  const int I = (int)pool.models.size();

  int lfd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (lfd < 0)
    throw ProtocolError(std::string("socket failed: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(lfd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons((uint16_t)port);
  if (::bind(lfd, (sockaddr*)&addr, sizeof(addr)) < 0) {
    int err = errno;
    ::close(lfd);
    throw ProtocolError("bind to port " + std::to_string(port) +
                        " failed: " + std::strerror(err));
  }
  if (::listen(lfd, 1) < 0) {
    int err = errno;
    ::close(lfd);
    throw ProtocolError(std::string("listen failed: ") + std::strerror(err));
  }

  LineChannel ch;
  ch.fd = ::accept(lfd, nullptr, nullptr);
  ::close(lfd);
  if (ch.fd < 0)
    throw ProtocolError(std::string("accept failed: ") + std::strerror(errno));

  ch.write_all("HELLO " + std::to_string(I) + " " +
               std::to_string(pool.T) + "\n");

  int rounds = 0;
  std::string line;
  auto never = std::chrono::steady_clock::time_point{};
  while (ch.read_line(line, never, false)) {
    std::vector<std::string> tok = tokens_of(line);
    if (tok.empty()) continue;
    if (tok[0] == "BYE") break;
    if (tok[0] != "BROADCAST")
      throw ProtocolError("expected BROADCAST, got: '" + clip(line) + "'");
    if ((int)tok.size() != 5 + pool.T)
      throw ProtocolError("BROADCAST wants k mu nu anchor and " +
                          std::to_string(pool.T) + " prices, got " +
                          std::to_string(tok.size() - 1) + " fields: '" +
                          clip(line) + "'");
    Broadcast b;
    b.k = parse_int(tok[1], line);
    b.mu = parse_num(tok[2], line);
    b.nu = parse_num(tok[3], line);
    b.anchor = parse_int(tok[4], line);
    b.prices.resize(pool.T);
    for (int t = 0; t < pool.T; ++t) b.prices[t] = parse_num(tok[5 + t], line);

    std::vector<RoundReply> replies = pool.round(b);
    std::string out;
    out.reserve((size_t)I * (20 * (size_t)pool.T + 64));
    for (int i = 0; i < I; ++i) {
      out += "RESPONSE " + std::to_string(b.k) + " " +
             std::to_string(pool.models[i].household().id) + " " +
             fmt17(replies[i].value) + " " +
             fmt17(replies[i].dissatisfaction);
      for (double x : replies[i].net_demand) out += " " + fmt17(x);
      out += '\n';
    }
    ch.write_all(out);
    ++rounds;
  }

  if (!dump_dir.empty()) dump_schedules(pool, dump_dir);
  return rounds;
}

// ---- coordinator side

struct SocketTransport::Impl {
  LineChannel ch;
  int I = 0, T = 0;
  double budget = 60.0;
  bool said_bye = false;
};

SocketTransport::SocketTransport(const std::string& host, int port,
                                 double round_budget_sec)
    : impl_(new Impl) {
  impl_->budget = round_budget_sec;

  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  int rc = ::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints,
                         &res);
  if (rc != 0)
    throw ProtocolError("cannot resolve " + host + ": " + gai_strerror(rc));
  int fd = -1;
  for (addrinfo* a = res; a; a = a->ai_next) {
    fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0)
    throw ProtocolError("cannot connect to " + host + ":" +
                        std::to_string(port));
  impl_->ch.fd = fd;

  std::string line;
  auto deadline = std::chrono::steady_clock::now() +
                  std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                      std::chrono::duration<double>(impl_->budget));
  if (!impl_->ch.read_line(line, deadline, true))
    throw ProtocolError("peer closed before HELLO");
  std::vector<std::string> tok = tokens_of(line);
  if (tok.size() != 3 || tok[0] != "HELLO")
    throw ProtocolError("expected HELLO, got: '" + clip(line) + "'");
  impl_->I = parse_int(tok[1], line);
  impl_->T = parse_int(tok[2], line);
  if (impl_->I < 1 || impl_->T < 1)
    throw ProtocolError("nonsense HELLO: '" + clip(line) + "'");
}

SocketTransport::~SocketTransport() {
  try {
    bye();
  } catch (...) {
  }
}

int SocketTransport::num_households() const { return impl_->I; }

void SocketTransport::bye() {
  if (impl_->said_bye || impl_->ch.fd < 0) return;
  impl_->said_bye = true;
  impl_->ch.write_all("BYE\n");
  impl_->ch.close_fd();
}

std::vector<RoundReply> SocketTransport::round(const Broadcast& b) {
  if (impl_->said_bye) throw ProtocolError("round() after bye()");
  if ((int)b.prices.size() != impl_->T)
    throw ProtocolError("broadcast carries " + std::to_string(b.prices.size()) +
                        " prices, peer announced " + std::to_string(impl_->T) +
                        " slots");

  std::string out = "BROADCAST " + std::to_string(b.k) + " " + fmt17(b.mu) +
                    " " + fmt17(b.nu) + " " + std::to_string(b.anchor);
  for (double p : b.prices) out += " " + fmt17(p);
  out += '\n';
  impl_->ch.write_all(out);

  auto deadline = std::chrono::steady_clock::now() +
                  std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                      std::chrono::duration<double>(impl_->budget));
  std::vector<RoundReply> replies;
  replies.reserve(impl_->I);
  int last_id = -1;
  std::string line;
  for (int i = 0; i < impl_->I; ++i) {
    if (!impl_->ch.read_line(line, deadline, true))
      throw ProtocolError("connection closed mid-round after " +
                          std::to_string(i) + " of " +
                          std::to_string(impl_->I) + " responses");
    std::vector<std::string> tok = tokens_of(line);
    if (tok.empty() || tok[0] != "RESPONSE")
      throw ProtocolError("expected RESPONSE, got: '" + clip(line) + "'");
    if ((int)tok.size() != 5 + impl_->T)
      throw ProtocolError("RESPONSE wants k id value dissatisfaction and " +
                          std::to_string(impl_->T) + " demands: '" +
                          clip(line) + "'");
    int k = parse_int(tok[1], line);
    if (k != b.k)
      throw ProtocolError("response for round " + std::to_string(k) +
                          " while round " + std::to_string(b.k) +
                          " is outstanding");
    int id = parse_int(tok[2], line);
    if (id <= last_id)
      throw ProtocolError("duplicate or out-of-order response for household " +
                          std::to_string(id));
    last_id = id;
    RoundReply r;
    r.value = parse_num(tok[3], line);
    r.dissatisfaction = parse_num(tok[4], line);
    r.net_demand.resize(impl_->T);
    for (int t = 0; t < impl_->T; ++t)
      r.net_demand[t] = parse_num(tok[5 + t], line);
    replies.push_back(std::move(r));
  }
  return replies;
}

}  // namespace dr
