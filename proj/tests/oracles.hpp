#pragma once

// Independent reference implementations and random instance generators.
// Nothing here calls the library routine it is used to check.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "swirl/model.hpp"
#include "swirl/spaces.hpp"

namespace oracle {

using swirl::Index;

/// Small deterministic generator for test instances.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    return lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
  }
  double normal(double sd = 1.0) { return sd * std::normal_distribution<double>(0.0, 1.0)(rng_); }
  Index index(Index n) { return std::uniform_int_distribution<Index>(0, n - 1)(rng_); }
  Index range(Index lo, Index hi) { return std::uniform_int_distribution<Index>(lo, hi)(rng_); }
  bool coin() { return index(2) == 1; }

  /// Strictly positive probability vector.
  std::vector<double> simplex(Index n) {
    std::vector<double> p(n);
    double total = 0.0;
    for (double& v : p) {
      v = uniform(0.05, 1.0);
      total += v;
    }
    for (double& v : p) v /= total;
    return p;
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

/// Naive history decoding: oldest state first.
inline std::vector<Index> decode(Index h, Index S, Index L) {
  std::vector<Index> out(L);
  for (Index i = L; i-- > 0;) {
    out[i] = h % S;
    h /= S;
  }
  return out;
}

inline Index encode(const std::vector<Index>& window, Index S) {
  Index h = 0;
  for (Index s : window) h = h * S + s;
  return h;
}

/// History index of step t of a state sequence, left padding with the first state.
inline Index history_at(const std::vector<Index>& states, Index t, Index S, Index L) {
  std::vector<Index> w;
  for (Index k = 0; k < L; ++k) {
    const long idx = static_cast<long>(t) - static_cast<long>(L - 1) + static_cast<long>(k);
    w.push_back(states[idx < 0 ? 0 : static_cast<Index>(idx)]);
  }
  return encode(w, S);
}

/// Random environment kernel; deterministic rows when requested.
inline swirl::EnvKernel random_env(Gen& g, Index S, Index A, bool deterministic) {
  swirl::EnvKernel env(S, A);
  for (Index s = 0; s < S; ++s) {
    for (Index a = 0; a < A; ++a) {
      if (deterministic) {
        env(s, a, g.index(S)) = 1.0;
      } else {
        const auto p = g.simplex(S);
        for (Index n = 0; n < S; ++n) env(s, a, n) = p[n];
      }
    }
  }
  return env;
}

/// Random full model with positive initial distributions.
inline swirl::DiscreteHmMdp random_model(Gen& g, Index Z, Index S, Index A, Index L,
                                         bool state_dependent, bool deterministic_env,
                                         bool reward_on_action = false) {
  swirl::DiscreteHmMdp m;
  m.spaces = swirl::Spaces{Z, S, A, L};
  m.env = random_env(g, S, A, deterministic_env);
  Index H = 1;
  for (Index i = 0; i < L; ++i) H *= S;
  m.rewards = swirl::RewardTable(Z, H, A);
  for (Index z = 0; z < Z; ++z) {
    for (Index h = 0; h < H; ++h) {
      const double shared = g.normal(0.5);
      for (Index a = 0; a < A; ++a) m.rewards(z, h, a) = reward_on_action ? g.normal(0.5) : shared;
    }
  }
  std::vector<double> logits(Z * S * Z);
  for (double& l : logits) l = g.normal();
  if (state_dependent) {
    m.mode_transition = swirl::ModeTransition(Z, S, logits);
  } else {
    logits.resize(Z * Z);
    m.mode_transition = swirl::ModeTransition::tied(Z, S, logits);
  }
  m.init_state = g.simplex(S);
  m.init_mode = g.simplex(Z);
  m.gamma = g.uniform(0.5, 0.9);
  m.alpha = g.uniform(0.3, 1.5);
  return m;
}

/// Trajectory whose states follow the environment kernel and whose actions are uniform.
inline swirl::Trajectory random_trajectory(Gen& g, const swirl::EnvKernel& env, Index T) {
  swirl::Trajectory tr;
  Index s = g.index(env.num_states());
  for (Index t = 0; t < T; ++t) {
    const Index a = g.index(env.num_actions());
    tr.states.push_back(s);
    tr.actions.push_back(a);
    const double u = g.uniform();
    double acc = 0.0;
    Index next = env.num_states() - 1;
    for (Index n = 0; n < env.num_states(); ++n) {
      acc += env(s, a, n);
      if (u < acc) {
        next = n;
        break;
      }
    }
    s = next;
  }
  return tr;
}

/// Dense soft value iteration without extrapolation, run to machine precision.
/// P(h' | h, a) is rebuilt from the state kernel by decoding histories.
inline std::vector<double> soft_q_reference(const std::vector<double>& reward,
                                            const swirl::EnvKernel& env, Index L, double gamma,
                                            double alpha, int sweeps = 20000) {
  const Index S = env.num_states(), A = env.num_actions();
  Index H = 1;
  for (Index i = 0; i < L; ++i) H *= S;
  std::vector<double> q(H * A, 0.0), next(H * A);
  for (int it = 0; it < sweeps; ++it) {
    std::vector<double> v(H);
    for (Index h = 0; h < H; ++h) {
      double m = q[h * A];
      for (Index a = 1; a < A; ++a) m = std::max(m, q[h * A + a]);
      double acc = 0.0;
      for (Index a = 0; a < A; ++a) acc += std::exp((q[h * A + a] - m) / alpha);
      v[h] = m + alpha * std::log(acc);
    }
    double diff = 0.0;
    for (Index h = 0; h < H; ++h) {
      auto window = decode(h, S, L);
      const Index cur = window.back();
      for (Index a = 0; a < A; ++a) {
        double ev = 0.0;
        for (Index s2 = 0; s2 < S; ++s2) {
          const double p = env(cur, a, s2);
          if (p == 0.0) continue;
          std::vector<Index> w2(window.begin() + 1, window.end());
          w2.push_back(s2);
          ev += p * v[encode(w2, S)];
        }
        next[h * A + a] = reward[h * A + a] + gamma * ev;
        diff = std::max(diff, std::abs(next[h * A + a] - q[h * A + a]));
      }
    }
    q.swap(next);
    if (diff < 1e-14 * (1.0 + std::abs(q[0]))) break;
  }
  return q;
}

/// Boltzmann log-policy of a dense Q table.
inline std::vector<double> log_policy(const std::vector<double>& q, Index A, double alpha) {
  std::vector<double> out(q.size());
  for (Index h = 0; h < q.size() / A; ++h) {
    double m = q[h * A];
    for (Index a = 1; a < A; ++a) m = std::max(m, q[h * A + a]);
    double acc = 0.0;
    for (Index a = 0; a < A; ++a) acc += std::exp((q[h * A + a] - m) / alpha);
    for (Index a = 0; a < A; ++a) out[h * A + a] = (q[h * A + a] - m) / alpha - std::log(acc);
  }
  return out;
}

/// Posteriors of a hidden chain by summing over every mode sequence.
struct Enumerated {
  std::vector<double> marginals;  // T x Z
  std::vector<double> pairs;      // (T-1) x Z x Z
  double log_likelihood = 0.0;
  std::vector<Index> best_path;
};

/// log_trans(z, t, z') gives log P(z_{t+1} = z' | z_t = z) at step t.
template <typename LogTrans>
Enumerated enumerate_chain(const std::vector<double>& log_init,
                           const std::vector<double>& log_emission, Index T, Index Z,
                           LogTrans log_trans) {
  Enumerated out;
  out.marginals.assign(T * Z, 0.0);
  out.pairs.assign(T > 0 ? (T - 1) * Z * Z : 0, 0.0);
  Index count = 1;
  for (Index t = 0; t < T; ++t) count *= Z;
  std::vector<double> weight(count);
  std::vector<Index> z(T);
  double best = -INFINITY;
  double total = 0.0;
  for (Index code = 0; code < count; ++code) {
    Index c = code;
    for (Index t = 0; t < T; ++t) {
      z[t] = c % Z;
      c /= Z;
    }
    double lp = log_init[z[0]] + log_emission[z[0]];
    for (Index t = 1; t < T; ++t) lp += log_trans(z[t - 1], t - 1, z[t]) + log_emission[t * Z + z[t]];
    if (lp > best) {
      best = lp;
      out.best_path = z;
    }
    weight[code] = std::exp(lp);
    total += weight[code];
  }
  for (Index code = 0; code < count; ++code) {
    Index c = code;
    for (Index t = 0; t < T; ++t) {
      z[t] = c % Z;
      c /= Z;
    }
    const double w = weight[code] / total;
    for (Index t = 0; t < T; ++t) out.marginals[t * Z + z[t]] += w;
    for (Index t = 0; t + 1 < T; ++t) out.pairs[(t * Z + z[t]) * Z + z[t + 1]] += w;
  }
  out.log_likelihood = std::log(total);
  return out;
}

/// Relative error with an absolute floor for entries near zero.
inline double rel_err(double got, double want, double floor = 1e-8) {
  return std::abs(got - want) / std::max(std::abs(want), floor);
}

}  // namespace oracle
