#include "dr/miqp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <string>

namespace dr {

namespace {

void validate_integers(const MiqpProblem& p) {
  for (int j : p.integer_vars) {
    if (j < 0 || j >= p.base.num_vars)
      throw std::invalid_argument("miqp: integer index out of range");
    if (p.base.lower[j] < -1e-9 || p.base.upper[j] > 1.0 + 1e-9)
      throw std::invalid_argument("miqp: binary bounds outside [0,1]");
  }
}

struct Node {
  double bound;         // parent relaxation value (root: -inf)
  long id;              // creation order, tie-break
  std::vector<std::pair<int, int>> fixes;  // (integer var, value)
};

struct NodeOrder {
  bool operator()(const Node& a, const Node& b) const {
    if (a.bound != b.bound) return a.bound > b.bound;  // min-heap on bound
    return a.id > b.id;
  }
};

}  // namespace

MiqpSolution solve_miqp(const MiqpProblem& p, const MiqpOptions& opts) {
  validate_integers(p);
  auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  };

  MiqpSolution out;
  QpProblem work = p.base;

  auto apply_fixes = [&](const std::vector<std::pair<int, int>>& fixes) {
    for (auto [j, v] : fixes) {
      work.lower[j] = v;
      work.upper[j] = v;
    }
  };
  auto clear_fixes = [&](const std::vector<std::pair<int, int>>& fixes) {
    for (auto [j, v] : fixes) {
      (void)v;
      work.lower[j] = p.base.lower[j];
      work.upper[j] = p.base.upper[j];
    }
  };

  double incumbent = kInf;
  std::vector<double> inc_x;

  // solve with every binary pinned to rounded values of `frac`
  auto probe = [&](const std::vector<double>& frac) {
    std::vector<std::pair<int, int>> fixes;
    fixes.reserve(p.integer_vars.size());
    for (int j : p.integer_vars) {
      int v = (int)std::lround(frac[j]);
      v = std::max(v, (int)std::ceil(p.base.lower[j] - 1e-9));
      v = std::min(v, (int)std::floor(p.base.upper[j] + 1e-9));
      fixes.emplace_back(j, v);
    }
    apply_fixes(fixes);
    QpSolution s = solve_qp(work, opts.qp_tol);
    clear_fixes(fixes);
    if (s.status == SolveStatus::optimal && s.objective < incumbent - 1e-12) {
      incumbent = s.objective;
      inc_x = s.x;
      out.incumbents.push_back(incumbent);
    }
  };

  std::priority_queue<Node, std::vector<Node>, NodeOrder> frontier;
  frontier.push({-kInf, 0, {}});
  long next_id = 1;
  long probes_since_incumbent = 0;

  auto rel_gap = [&](double bound) {
    if (incumbent >= kInf) return kInf;
    return (incumbent - bound) / std::max(1.0, std::fabs(incumbent));
  };

  // proven lower bound: min over incumbent and every pruned subtree bound
  double pruned_min = kInf;
  bool hit_limit = false;
  while (!frontier.empty()) {
    if (out.nodes >= opts.node_limit) {
      out.status = SolveStatus::node_limit;
      hit_limit = true;
      break;
    }
    if (elapsed() > opts.time_limit_sec) {
      out.status = SolveStatus::time_limit;
      hit_limit = true;
      break;
    }
    Node node = frontier.top();
    frontier.pop();
    if (incumbent < kInf && rel_gap(node.bound) <= opts.mip_gap_tol) {
      // heap is bound-ordered: everything left is within tolerance
      pruned_min = std::min(pruned_min, node.bound);
      frontier = {};
      break;
    }
    ++out.nodes;

    apply_fixes(node.fixes);
    QpSolution rel = solve_qp(work, opts.qp_tol);
    clear_fixes(node.fixes);
    if (rel.status == SolveStatus::infeasible) {
      if (out.nodes == 1) out.max_violation = rel.max_violation;
      continue;
    }
    if (rel.objective >= incumbent - opts.mip_gap_tol *
                                         std::max(1.0, std::fabs(incumbent))) {
      pruned_min = std::min(pruned_min, rel.objective);
      continue;
    }

    // most fractional binary, ties to the lowest index
    int branch_var = -1;
    double best_frac = opts.integrality_tol;
    for (int j : p.integer_vars) {
      double f = std::fabs(rel.x[j] - std::round(rel.x[j]));
      if (f > best_frac + 1e-15) {
        best_frac = f;
        branch_var = j;
      }
    }
    if (branch_var < 0) {
      // integral relaxation: pin binaries and resolve for an exact incumbent
      probe(rel.x);
      pruned_min = std::min(pruned_min, rel.objective);
      continue;
    }
    if (opts.rounding_probe &&
        (out.nodes == 1 || (incumbent >= kInf && ++probes_since_incumbent % 8 == 0)))
      probe(rel.x);

    int lo = (int)std::ceil(work.lower[branch_var] - 1e-9);
    int hi = (int)std::floor(work.upper[branch_var] + 1e-9);
    Node down{rel.objective, next_id++, node.fixes};
    down.fixes.emplace_back(branch_var, lo);
    Node up{rel.objective, next_id++, node.fixes};
    up.fixes.emplace_back(branch_var, hi);
    frontier.push(std::move(down));
    frontier.push(std::move(up));
  }

  if (!hit_limit && incumbent >= kInf) {
    out.status = SolveStatus::infeasible;
    return out;
  }
  if (!hit_limit) out.status = SolveStatus::optimal;

  double open_bound = frontier.empty() ? kInf : frontier.top().bound;
  out.objective = incumbent;
  out.x = inc_x;
  out.bound = std::min(std::min(pruned_min, open_bound), incumbent);
  out.gap = incumbent < kInf ? std::max(0.0, rel_gap(out.bound)) : kInf;
  return out;
}

MiqpSolution enumerate_oracle(const MiqpProblem& p, double qp_tol) {
  validate_integers(p);
  if (p.integer_vars.size() > 20)
    throw std::invalid_argument("enumerate_oracle: more than 20 binaries");
  MiqpSolution out;
  QpProblem work = p.base;
  const int nb = (int)p.integer_vars.size();
  double worst_violation = kInf;
  for (long mask = 0; mask < (1L << nb); ++mask) {
    bool in_bounds = true;
    for (int k = 0; k < nb; ++k) {
      int j = p.integer_vars[k];
      int v = (mask >> k) & 1;
      if (v < p.base.lower[j] - 1e-9 || v > p.base.upper[j] + 1e-9) {
        in_bounds = false;
        break;
      }
      work.lower[j] = v;
      work.upper[j] = v;
    }
    if (in_bounds) {
      QpSolution s = solve_qp(work, qp_tol);
      if (s.status == SolveStatus::optimal) {
        ++out.nodes;
        if (s.objective < out.objective - 1e-12) {
          out.objective = s.objective;
          out.x = s.x;
        }
      } else {
        worst_violation = std::min(worst_violation, s.max_violation);
      }
    }
    for (int k = 0; k < nb; ++k) {
      int j = p.integer_vars[k];
      work.lower[j] = p.base.lower[j];
      work.upper[j] = p.base.upper[j];
    }
  }
  if (out.nodes == 0) {
    out.status = SolveStatus::infeasible;
    out.max_violation = std::isfinite(worst_violation) ? worst_violation : 0.0;
    return out;
  }
  out.status = SolveStatus::optimal;
  out.bound = out.objective;
  out.gap = 0.0;
  return out;
}

namespace {

void put(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  os << buf;
}

void put_row(std::ostream& os, const LinearRow& r) {
  os << r.idx.size();
  for (size_t k = 0; k < r.idx.size(); ++k) {
    os << ' ' << r.idx[k] << ' ';
    put(os, r.coef[k]);
  }
  os << '\n';
}

// stream extraction rejects "inf"/"nan"; strtod accepts them and
// round-trips %.17g exactly
double get_d(std::istream& is) {
  std::string tok;
  if (!(is >> tok)) throw std::runtime_error("load_problem: truncated input");
  char* end = nullptr;
  double v = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size())
    throw std::runtime_error("load_problem: bad number '" + tok + "'");
  return v;
}

long get_i(std::istream& is) {
  long v = 0;
  if (!(is >> v)) throw std::runtime_error("load_problem: truncated input");
  return v;
}

LinearRow get_row(std::istream& is, int num_vars) {
  long nnz = get_i(is);
  if (nnz < 0 || nnz > num_vars)
    throw std::runtime_error("load_problem: bad row length");
  LinearRow r;
  for (long k = 0; k < nnz; ++k) {
    long j = get_i(is);
    double a = get_d(is);
    r.add((int)j, a);
  }
  return r;
}

}  // namespace

void dump_problem(const MiqpProblem& p, std::ostream& os) {
  const QpProblem& b = p.base;
  os << "miqp 1\n";
  os << b.num_vars << ' ' << b.eq_rows.size() << ' ' << b.ineq_rows.size()
     << ' ' << p.integer_vars.size() << '\n';
  auto put_vec = [&](const std::vector<double>& v) {
    for (size_t i = 0; i < v.size(); ++i) {
      if (i) os << ' ';
      put(os, v[i]);
    }
    os << '\n';
  };
  put_vec(b.quadratic_diag);
  put_vec(b.linear);
  put(os, b.constant);
  os << '\n';
  put_vec(b.lower);
  put_vec(b.upper);
  for (size_t r = 0; r < b.eq_rows.size(); ++r) {
    put_row(os, b.eq_rows[r]);
    put(os, b.eq_rhs[r]);
    os << '\n';
  }
  for (size_t r = 0; r < b.ineq_rows.size(); ++r) {
    put_row(os, b.ineq_rows[r]);
    put(os, b.ineq_lower[r]);
    os << ' ';
    put(os, b.ineq_upper[r]);
    os << '\n';
  }
  for (size_t k = 0; k < p.integer_vars.size(); ++k) {
    if (k) os << ' ';
    os << p.integer_vars[k];
  }
  os << '\n';
}

MiqpProblem load_problem(std::istream& is) {
  std::string tag;
  int version;
  is >> tag >> version;
  if (tag != "miqp" || version != 1)
    throw std::runtime_error("load_problem: bad header");
  MiqpProblem p;
  QpProblem& b = p.base;
  long nv = get_i(is), n_eq = get_i(is), n_in = get_i(is), n_int = get_i(is);
  if (nv < 0 || n_eq < 0 || n_in < 0 || n_int < 0 || n_int > nv)
    throw std::runtime_error("load_problem: bad dimensions");
  b.num_vars = (int)nv;
  auto get_vec = [&](std::vector<double>& v) {
    v.resize(nv);
    for (auto& x : v) x = get_d(is);
  };
  get_vec(b.quadratic_diag);
  get_vec(b.linear);
  b.constant = get_d(is);
  get_vec(b.lower);
  get_vec(b.upper);
  for (long r = 0; r < n_eq; ++r) {
    b.eq_rows.push_back(get_row(is, b.num_vars));
    b.eq_rhs.push_back(get_d(is));
  }
  for (long r = 0; r < n_in; ++r) {
    b.ineq_rows.push_back(get_row(is, b.num_vars));
    b.ineq_lower.push_back(get_d(is));
    b.ineq_upper.push_back(get_d(is));
  }
  for (long k = 0; k < n_int; ++k) p.integer_vars.push_back((int)get_i(is));
  return p;
}

}  // namespace dr
