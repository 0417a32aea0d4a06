#include "swirl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "swirl/error.hpp"
#include "swirl/logmath.hpp"
#include "swirl/parallel.hpp"
#include "swirl/random.hpp"

namespace swirl {

namespace {

constexpr double kInitialStatePseudoCount = 1e-6;
constexpr double kRewardInitStd = 0.1;
constexpr double kLogitInitStd = 1.0;
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

SoftQOptions softq_options(const FitConfig& config) {
  SoftQOptions o;
  o.max_iters = config.softq_iters;
  o.tol = config.softq_tol;
  return o;
}

bool tied_transition(const FitConfig& config) {
  return config.variant == TransitionVariant::kStateIndependent;
}

// Weighted log terms skip zero weights so that 0 * log 0 contributes 0.
double weighted_log(double weight, double log_p) {
  return weight == 0.0 ? 0.0 : weight * log_p;
}

// Flat parameter vector [rewards | transition logits | init logits].
struct Layout {
  Index Z, H, A, S;
  bool reward_on_action;
  bool tied;

  Index reward_size() const { return reward_on_action ? Z * H * A : Z * H; }
  Index transition_size() const { return tied ? Z * Z : Z * S * Z; }
  Index size() const { return reward_size() + transition_size() + Z; }
};

Layout layout_for(const DiscreteHmMdp& theta, const FitConfig& config) {
  const Spaces& sp = theta.spaces;
  return Layout{sp.num_modes, theta.rewards.num_histories(), sp.num_actions,
                sp.num_states, config.reward_on_action, tied_transition(config)};
}

std::vector<double> pack(const DiscreteHmMdp& theta, const Layout& L) {
  std::vector<double> p;
  p.reserve(L.size());
  if (L.reward_on_action) {
    p.insert(p.end(), theta.rewards.data().begin(), theta.rewards.data().end());
  } else {
    for (Index z = 0; z < L.Z; ++z) {
      for (Index h = 0; h < L.H; ++h) p.push_back(theta.rewards(z, h, 0));
    }
  }
  if (L.tied) {
    const auto t = theta.mode_transition.tied_logits();
    p.insert(p.end(), t.begin(), t.end());
  } else {
    const auto& t = theta.mode_transition.logits();
    p.insert(p.end(), t.begin(), t.end());
  }
  for (double q : theta.init_mode) p.push_back(std::log(q));
  return p;
}

DiscreteHmMdp unpack(const DiscreteHmMdp& base, const Layout& L,
                     std::span<const double> p) {
  DiscreteHmMdp out = base;
  Index off = 0;
  if (L.reward_on_action) {
    std::copy(p.begin(), p.begin() + L.reward_size(), out.rewards.data().begin());
  } else {
    for (Index z = 0; z < L.Z; ++z) {
      for (Index h = 0; h < L.H; ++h) {
        for (Index a = 0; a < L.A; ++a) out.rewards(z, h, a) = p[z * L.H + h];
      }
    }
  }
  off += L.reward_size();
  const auto tp = p.subspan(off, L.transition_size());
  if (L.tied) {
    out.mode_transition = ModeTransition::tied(L.Z, L.S, tp);
  } else {
    out.mode_transition = ModeTransition(L.Z, L.S, std::vector<double>(tp.begin(), tp.end()));
  }
  off += L.transition_size();
  std::vector<double> init(p.begin() + off, p.begin() + off + L.Z);
  softmax_inplace(init);
  out.init_mode = std::move(init);
  return out;
}

// Scales each mode's reward block back onto the ball of radius max_norm.
void project_rewards(std::span<double> params, const Layout& L, double max_norm) {
  if (max_norm <= 0.0) return;
  const Index per_mode = L.reward_size() / L.Z;
  for (Index z = 0; z < L.Z; ++z) {
    const auto block = params.subspan(z * per_mode, per_mode);
    double sq = 0.0;
    for (double v : block) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
      for (double& v : block) v *= max_norm / norm;
    }
  }
}

// Everything one fit reuses across E- and M-steps.
struct Context {
  AugmentedKernel kernel;
  SoftQOptions options;
  std::size_t workers = 1;
};

std::vector<PolicyTable> policies_for(const DiscreteHmMdp& theta, const Context& ctx) {
  const Index Z = theta.spaces.num_modes;
  std::vector<PolicyTable> out(Z);
  parallel_for(Z, ctx.workers, [&](Index z) {
    const QTable q =
        soft_q_iterate(theta.rewards.mode(z), ctx.kernel, theta.gamma, theta.alpha, ctx.options);
    out[z] = boltzmann_policy(q, theta.alpha);
  });
  return out;
}

ParameterGradient gradient_at(const DiscreteHmMdp& theta,
                              std::span<const PolicyTable> policies,
                              const SufficientStats& stats, const FitConfig& config,
                              const Context& ctx) {
  const Index Z = stats.num_modes, H = stats.num_histories, A = stats.num_actions,
              S = stats.num_states;
  ParameterGradient g;
  std::vector<std::vector<double>> per_mode(Z);
  parallel_for(Z, ctx.workers, [&](Index z) {
    std::span<const double> w(stats.action_weight.data() + z * H * A, H * A);
    per_mode[z] = policy_reward_gradient(w, policies[z], ctx.kernel, theta.gamma, theta.alpha);
  });
  if (config.reward_on_action) {
    g.rewards.reserve(Z * H * A);
    for (const auto& m : per_mode) g.rewards.insert(g.rewards.end(), m.begin(), m.end());
  } else {
    g.rewards.assign(Z * H, 0.0);
    for (Index z = 0; z < Z; ++z) {
      for (Index h = 0; h < H; ++h) {
        double acc = 0.0;
        for (Index a = 0; a < A; ++a) acc += per_mode[z][h * A + a];
        g.rewards[z * H + h] = acc;
      }
    }
  }

  const ModeTransition& mt = theta.mode_transition;
  std::vector<double> full(Z * S * Z);
  for (Index z = 0; z < Z; ++z) {
    for (Index s = 0; s < S; ++s) {
      const double* c = stats.transition.data() + (z * S + s) * Z;
      double row = 0.0;
      for (Index n = 0; n < Z; ++n) row += c[n];
      for (Index n = 0; n < Z; ++n) full[(z * S + s) * Z + n] = c[n] - mt.prob(z, s, n) * row;
    }
  }
  // The self-transition prior applies to every row (z, s); a tied table
  // collects it from all of its copies.
  if (config.transition_stickiness > 0.0) {
    const double k = config.transition_stickiness;
    for (Index z = 0; z < Z; ++z) {
      for (Index s = 0; s < S; ++s) {
        for (Index n = 0; n < Z; ++n) {
          full[(z * S + s) * Z + n] += k * ((n == z ? 1.0 : 0.0) - mt.prob(z, s, n));
        }
      }
    }
  }
  if (tied_transition(config)) {
    g.transition.assign(Z * Z, 0.0);
    for (Index z = 0; z < Z; ++z) {
      for (Index s = 0; s < S; ++s) {
        for (Index n = 0; n < Z; ++n) g.transition[z * Z + n] += full[(z * S + s) * Z + n];
      }
    }
  } else {
    g.transition = std::move(full);
  }
  if (config.reward_l2 > 0.0) {
    for (Index z = 0; z < Z; ++z) {
      for (Index h = 0; h < H; ++h) {
        if (config.reward_on_action) {
          for (Index a = 0; a < A; ++a) {
            g.rewards[(z * H + h) * A + a] -= config.reward_l2 * theta.rewards(z, h, a);
          }
        } else {
          g.rewards[z * H + h] -= config.reward_l2 * theta.rewards(z, h, 0);
        }
      }
    }
  }

  double total = 0.0;
  for (double c : stats.initial) total += c;
  g.init.resize(Z);
  for (Index z = 0; z < Z; ++z) g.init[z] = stats.initial[z] - theta.init_mode[z] * total;
  return g;
}

Context make_context(const DiscreteHmMdp& theta, const SoftQOptions& options,
                     std::size_t workers) {
  return Context{augmented_env_kernel(theta.env, theta.spaces), options, workers};
}

EStepResult e_step_with(const DiscreteHmMdp& theta, std::span<const Trajectory> data,
                        const Context& ctx) {
  EStepResult r;
  r.policies = policies_for(theta, ctx);
  r.posteriors.resize(data.size());
  parallel_for(data.size(), ctx.workers, [&](Index n) {
    r.posteriors[n] = forward_backward(data[n], theta, r.policies);
  });
  for (const auto& p : r.posteriors) {
    r.train_ll += p.policy_log_likelihood;
    r.total_ll += p.log_likelihood;
  }
  r.aux = auxiliary_G(theta, r.policies, sufficient_statistics(theta, r.posteriors, data));
  return r;
}

void require_finite(std::span<const double> block, const char* name) {
  for (double v : block) {
    if (!std::isfinite(v)) {
      throw NumericalError(std::string("non-finite gradient in parameter block '") + name +
                           "'");
    }
  }
}

}  // namespace

void FitConfig::validate() const {
  if (num_modes < 1) throw InvalidArgument("num_modes must be >= 1");
  if (history_len < 1) throw InvalidArgument("history_len must be >= 1");
  if (em_iters < 1) throw InvalidArgument("em_iters must be >= 1");
  if (softq_iters < 1) throw InvalidArgument("softq_iters must be >= 1");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be positive");
  if (lr_decay < 0.0) throw InvalidArgument("lr_decay must be non-negative");
  if (m_step_steps < 0) throw InvalidArgument("m_step_steps must be non-negative");
  if (tied_warmup < 0) throw InvalidArgument("tied_warmup must be non-negative");
  if (!(sticky_init >= 0.0) || !std::isfinite(sticky_init)) {
    throw InvalidArgument("sticky_init must be finite and non-negative");
  }
  if (!(reward_max_norm >= 0.0) || !std::isfinite(reward_max_norm)) {
    throw InvalidArgument("reward_max_norm must be finite and non-negative");
  }
  if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidArgument("gamma must lie in [0, 1)");
  if (!(alpha > 0.0)) throw InvalidArgument("alpha must be positive");
  if (patience < 1) throw InvalidArgument("patience must be >= 1");
  if (!(reward_l2 >= 0.0)) throw InvalidArgument("reward_l2 must be non-negative");
  if (!(transition_stickiness >= 0.0) || !std::isfinite(transition_stickiness)) {
    throw InvalidArgument("transition_stickiness must be finite and non-negative");
  }
}

std::string FitConfig::variant_name() const {
  return std::string(tied_transition(*this) ? "I" : "S") + "-" + std::to_string(history_len);
}

std::pair<TransitionVariant, Index> parse_variant_name(const std::string& name) {
  if (name.size() < 3 || name[1] != '-' || (name[0] != 'I' && name[0] != 'S')) {
    throw InvalidArgument("model variant '" + name + "' is not of the form I-<L> or S-<L>");
  }
  Index len = 0;
  for (Index i = 2; i < name.size(); ++i) {
    if (name[i] < '0' || name[i] > '9') {
      throw InvalidArgument("model variant '" + name + "' has a non-numeric history length");
    }
    len = len * 10 + static_cast<Index>(name[i] - '0');
  }
  if (len == 0) throw InvalidArgument("model variant '" + name + "' needs L >= 1");
  return {name[0] == 'I' ? TransitionVariant::kStateIndependent
                         : TransitionVariant::kStateDependent,
          len};
}

double FitResult::final_train_ll() const {
  return train_ll_trace.empty() ? -std::numeric_limits<double>::infinity()
                                : train_ll_trace.back();
}

SufficientStats sufficient_statistics(const DiscreteHmMdp& theta,
                                      std::span<const ModePosteriors> posteriors,
                                      std::span<const Trajectory> data) {
  if (posteriors.size() != data.size()) {
    throw InvalidArgument("posterior count does not match trajectory count");
  }
  const Spaces& sp = theta.spaces;
  const AugmentedSpace aug(sp);
  SufficientStats st;
  st.num_modes = sp.num_modes;
  st.num_histories = aug.total_size();
  st.num_states = sp.num_states;
  st.num_actions = sp.num_actions;
  const Index Z = st.num_modes, H = st.num_histories, A = st.num_actions, S = st.num_states;
  st.action_weight.assign(Z * H * A, 0.0);
  st.transition.assign(Z * S * Z, 0.0);
  st.initial.assign(Z, 0.0);
  for (Index n = 0; n < data.size(); ++n) {
    const Trajectory& tr = data[n];
    const ModePosteriors& p = posteriors[n];
    const Index T = tr.length();
    if (p.num_steps != T || p.num_modes != Z) {
      throw InvalidArgument("posterior length does not match trajectory " + std::to_string(n));
    }
    const std::vector<Index> hist = aug.encode_sequence(tr.states);
    for (Index t = 0; t < T; ++t) {
      for (Index z = 0; z < Z; ++z) {
        st.action_weight[(z * H + hist[t]) * A + tr.actions[t]] += p.marginal(t, z);
      }
    }
    for (Index t = 0; t + 1 < T; ++t) {
      const Index s = tr.states[t];
      for (Index z = 0; z < Z; ++z) {
        for (Index zn = 0; zn < Z; ++zn) {
          st.transition[(z * S + s) * Z + zn] += p.pair(t, z, zn);
        }
      }
    }
    for (Index z = 0; z < Z; ++z) st.initial[z] += p.marginal(0, z);
    st.constant += environment_log_likelihood(tr, theta);
    st.total_steps += static_cast<double>(T);
  }
  return st;
}

std::vector<PolicyTable> solve_policies(const DiscreteHmMdp& theta,
                                        const AugmentedKernel& kernel,
                                        const SoftQOptions& options, std::size_t workers) {
  const Index Z = theta.spaces.num_modes;
  std::vector<PolicyTable> out(Z);
  parallel_for(Z, workers, [&](Index z) {
    out[z] = boltzmann_policy(
        soft_q_iterate(theta.rewards.mode(z), kernel, theta.gamma, theta.alpha, options),
        theta.alpha);
  });
  return out;
}

AuxiliaryTerms auxiliary_G(const DiscreteHmMdp& theta, std::span<const PolicyTable> policies,
                           const SufficientStats& st) {
  const Index Z = st.num_modes, H = st.num_histories, A = st.num_actions, S = st.num_states;
  if (policies.size() != Z) throw InvalidArgument("one policy per mode is required");
  AuxiliaryTerms g;
  for (Index z = 0; z < Z; ++z) {
    g.init_mode += weighted_log(st.initial[z], std::log(theta.init_mode[z]));
    const double* w = st.action_weight.data() + z * H * A;
    const auto& lp = policies[z].log_probs;
    for (Index i = 0; i < H * A; ++i) g.policy += weighted_log(w[i], lp[i]);
    for (Index s = 0; s < S; ++s) {
      for (Index n = 0; n < Z; ++n) {
        g.mode_transition += weighted_log(st.transition[(z * S + s) * Z + n],
                                          theta.mode_transition.log_prob(z, s, n));
      }
    }
  }
  g.constant = st.constant;
  return g;
}

AuxiliaryTerms auxiliary_G(const DiscreteHmMdp& theta, std::span<const PolicyTable> policies,
                           std::span<const ModePosteriors> posteriors,
                           std::span<const Trajectory> data) {
  return auxiliary_G(theta, policies, sufficient_statistics(theta, posteriors, data));
}

EStepResult e_step(const DiscreteHmMdp& theta, std::span<const Trajectory> data,
                   const SoftQOptions& options, std::size_t workers) {
  return e_step_with(theta, data, make_context(theta, options, workers));
}

ParameterGradient objective_gradient(const DiscreteHmMdp& theta, const SufficientStats& stats,
                                     const FitConfig& config) {
  const Context ctx = make_context(theta, softq_options(config), config.workers);
  const auto policies = policies_for(theta, ctx);
  return gradient_at(theta, policies, stats, config, ctx);
}

double reward_penalty(const DiscreteHmMdp& theta, const FitConfig& config) {
  if (config.reward_l2 == 0.0) return 0.0;
  const RewardTable& r = theta.rewards;
  double acc = 0.0;
  for (Index z = 0; z < r.num_modes(); ++z) {
    for (Index h = 0; h < r.num_histories(); ++h) {
      if (config.reward_on_action) {
        for (Index a = 0; a < r.num_actions(); ++a) acc += r(z, h, a) * r(z, h, a);
      } else {
        acc += r(z, h, 0) * r(z, h, 0);
      }
    }
  }
  return 0.5 * config.reward_l2 * acc;
}

double transition_penalty(const DiscreteHmMdp& theta, const FitConfig& config) {
  if (config.transition_stickiness == 0.0) return 0.0;
  const ModeTransition& mt = theta.mode_transition;
  double acc = 0.0;
  for (Index z = 0; z < mt.num_modes(); ++z) {
    for (Index s = 0; s < mt.num_states(); ++s) acc += mt.log_prob(z, s, z);
  }
  return -config.transition_stickiness * acc;
}

double prior_penalty(const DiscreteHmMdp& theta, const FitConfig& config) {
  return reward_penalty(theta, config) + transition_penalty(theta, config);
}

double optimizable_objective(const DiscreteHmMdp& theta, const SufficientStats& stats,
                             const FitConfig& config) {
  const Context ctx = make_context(theta, softq_options(config), config.workers);
  return auxiliary_G(theta, policies_for(theta, ctx), stats).optimizable() -
         prior_penalty(theta, config);
}

namespace {

DiscreteHmMdp m_step_with(const DiscreteHmMdp& theta, const SufficientStats& stats,
                          const FitConfig& config, const Context& ctx, MStepState& state) {
  if (!(config.learning_rate >= 0.0)) throw InvalidArgument("learning_rate must be >= 0");
  const Layout L = layout_for(theta, config);
  const double scale = 1.0 / std::max(stats.total_steps, 1.0);
  const double eta =
      config.learning_rate / (1.0 + config.lr_decay * static_cast<double>(state.em_iteration));
  ++state.em_iteration;

  DiscreteHmMdp current = theta;
  std::vector<double> params = pack(theta, L);
  auto policies = policies_for(current, ctx);
  // A step must not lower the penalized objective, and must not lower G itself
  // either, so the likelihood stays monotone when a reward prior is active.
  double g_value = auxiliary_G(current, policies, stats).optimizable() * scale;
  double objective = g_value - prior_penalty(current, config) * scale;
  if (config.optimizer == Optimizer::kAdam && state.first_moment.size() != params.size()) {
    state.first_moment.assign(params.size(), 0.0);
    state.second_moment.assign(params.size(), 0.0);
    state.step = 0;
  }

  std::vector<double> direction(params.size()), candidate(params.size());
  for (int step = 0; step < config.m_step_steps; ++step) {
    const ParameterGradient g = gradient_at(current, policies, stats, config, ctx);
    require_finite(g.rewards, "rewards");
    require_finite(g.transition, "mode_transition");
    require_finite(g.init, "init_mode");
    std::vector<double> flat;
    flat.reserve(params.size());
    flat.insert(flat.end(), g.rewards.begin(), g.rewards.end());
    flat.insert(flat.end(), g.transition.begin(), g.transition.end());
    flat.insert(flat.end(), g.init.begin(), g.init.end());

    bool any = false;
    if (config.optimizer == Optimizer::kAdam) {
      ++state.step;
      const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
      const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
      for (Index i = 0; i < flat.size(); ++i) {
        const double gi = flat[i] * scale;
        state.first_moment[i] = kAdamBeta1 * state.first_moment[i] + (1 - kAdamBeta1) * gi;
        state.second_moment[i] =
            kAdamBeta2 * state.second_moment[i] + (1 - kAdamBeta2) * gi * gi;
        direction[i] =
            eta * (state.first_moment[i] / c1) / (std::sqrt(state.second_moment[i] / c2) + kAdamEps);
        any = any || direction[i] != 0.0;
      }
    } else {
      for (Index i = 0; i < flat.size(); ++i) {
        direction[i] = eta * flat[i] * scale;
        any = any || direction[i] != 0.0;
      }
    }
    if (!any) break;

    bool accepted = false;
    double step_scale = 1.0;
    for (int b = 0; b <= config.max_backtracks; ++b, step_scale *= 0.5) {
      for (Index i = 0; i < params.size(); ++i) {
        candidate[i] = params[i] + step_scale * direction[i];
      }
      project_rewards(candidate, L, config.reward_max_norm);
      DiscreteHmMdp trial = unpack(theta, L, candidate);
      auto trial_policies = policies_for(trial, ctx);
      const double trial_g = auxiliary_G(trial, trial_policies, stats).optimizable() * scale;
      const double value = trial_g - prior_penalty(trial, config) * scale;
      if (value >= objective && trial_g >= g_value) {
        g_value = trial_g;
        params.swap(candidate);
        current = std::move(trial);
        policies = std::move(trial_policies);
        objective = value;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  return current;
}

}  // namespace

DiscreteHmMdp m_step(const DiscreteHmMdp& theta, std::span<const ModePosteriors> posteriors,
                     std::span<const Trajectory> data, const FitConfig& config,
                     MStepState* state) {
  MStepState local;
  const Context ctx = make_context(theta, softq_options(config), config.workers);
  return m_step_with(theta, sufficient_statistics(theta, posteriors, data), config, ctx,
                     state ? *state : local);
}

DiscreteHmMdp initialize_parameters(std::span<const Trajectory> data, const EnvKernel& env,
                                    const FitConfig& config) {
  if (data.empty()) throw InvalidArgument("cannot fit an empty data set");
  DiscreteHmMdp theta;
  theta.spaces = Spaces{config.num_modes, env.num_states(), env.num_actions(),
                        config.history_len};
  const Index H = theta.spaces.augmented_size();
  const Index Z = config.num_modes, S = env.num_states(), A = env.num_actions();
  theta.env = env;
  theta.gamma = config.gamma;
  theta.alpha = config.alpha;

  Rng rng(derive_seed(config.seed, 0));
  theta.rewards = RewardTable(Z, H, A);
  for (Index z = 0; z < Z; ++z) {
    for (Index h = 0; h < H; ++h) {
      if (config.reward_on_action) {
        for (Index a = 0; a < A; ++a) theta.rewards(z, h, a) = kRewardInitStd * standard_normal(rng);
      } else {
        const double r = kRewardInitStd * standard_normal(rng);
        for (Index a = 0; a < A; ++a) theta.rewards(z, h, a) = r;
      }
    }
  }
  if (config.reward_max_norm > 0.0) {
    for (Index z = 0; z < Z; ++z) {
      double sq = 0.0;
      for (Index h = 0; h < H; ++h) {
        for (Index a = 0; a < (config.reward_on_action ? A : 1); ++a) {
          sq += theta.rewards(z, h, a) * theta.rewards(z, h, a);
        }
      }
      const double norm = std::sqrt(sq);
      if (norm <= config.reward_max_norm) continue;
      for (double& v : theta.rewards.mode(z)) v *= config.reward_max_norm / norm;
    }
  }
  // Both variants start from one Z x Z draw replicated over states; an
  // S-variant unties the copies during optimization.
  std::vector<double> logits(Z * Z);
  for (double& l : logits) l = kLogitInitStd * standard_normal(rng);
  for (Index z = 0; z < Z; ++z) logits[z * Z + z] += config.sticky_init;
  theta.mode_transition = ModeTransition::tied(Z, S, logits);
  if (!tied_transition(config)) {
    theta.mode_transition = ModeTransition(Z, S, theta.mode_transition.logits());
  }
  std::vector<double> init(Z);
  for (double& l : init) l = kLogitInitStd * standard_normal(rng);
  softmax_inplace(init);
  theta.init_mode = std::move(init);

  std::vector<double> counts(S, kInitialStatePseudoCount);
  double total = kInitialStatePseudoCount * static_cast<double>(S);
  for (const Trajectory& tr : data) {
    counts[tr.states.front()] += 1.0;
    total += 1.0;
  }
  for (double& c : counts) c /= total;
  theta.init_state = std::move(counts);
  return theta;
}

FitResult fit(std::span<const Trajectory> data, const EnvKernel& env, const FitConfig& config) {
  config.validate();
  if (data.empty()) throw InvalidArgument("cannot fit an empty data set");
  for (const Trajectory& tr : data) validate_trajectory(tr, env.num_states(), env.num_actions());

  FitResult result;
  result.config = config;
  result.seed = config.seed;
  DiscreteHmMdp theta = initialize_parameters(data, env, config);
  const Context ctx = make_context(theta, softq_options(config), config.workers);
  MStepState state;

  EStepResult es = e_step_with(theta, data, ctx);
  int calm = 0;
  double previous = es.train_ll - prior_penalty(theta, config);
  for (int k = 1; k <= config.em_iters; ++k) {
    const bool warmup = !tied_transition(config) && k <= config.tied_warmup;
    FitConfig step_config = config;
    if (warmup) step_config.variant = TransitionVariant::kStateIndependent;
    theta = m_step_with(theta, sufficient_statistics(theta, es.posteriors, data), step_config,
                        ctx, state);
    if (!tied_transition(config) && !theta.mode_transition.state_dependent()) {
      theta.mode_transition = ModeTransition(theta.spaces.num_modes, theta.spaces.num_states,
                                             theta.mode_transition.logits());
    }
    es = e_step_with(theta, data, ctx);
    result.train_ll_trace.push_back(es.train_ll);
    result.aux_trace.push_back(es.aux.total());
    const double objective = es.train_ll - prior_penalty(theta, config);
    result.objective_trace.push_back(objective);
    if (!std::isfinite(es.train_ll)) {
      throw NumericalError("train log-likelihood became non-finite at EM iteration " +
                           std::to_string(k));
    }
    calm = !warmup && std::abs(objective - previous) < config.tolerance ? calm + 1 : 0;
    previous = objective;
    if (calm >= config.patience) {
      result.converged = true;
      break;
    }
  }
  result.model = std::move(theta);
  return result;
}

std::vector<FitResult> fit_seeds(std::span<const Trajectory> data, const EnvKernel& env,
                                 const FitConfig& config, int num_seeds) {
  if (num_seeds < 1) throw InvalidArgument("num_seeds must be >= 1");
  std::vector<FitResult> results(static_cast<Index>(num_seeds));
  parallel_for(results.size(), config.workers, [&](Index k) {
    FitConfig c = config;
    c.seed = config.seed + k;
    c.workers = 1;
    results[k] = fit(data, env, c);
    results[k].config.workers = config.workers;
  });
  return results;
}

std::vector<FitResult> select_top(std::vector<FitResult> results, int keep_top) {
  if (keep_top < 1) throw InvalidArgument("keep_top must be >= 1");
  std::stable_sort(results.begin(), results.end(), [](const FitResult& a, const FitResult& b) {
    return a.final_train_ll() > b.final_train_ll();
  });
  if (results.size() > static_cast<Index>(keep_top)) results.resize(keep_top);
  return results;
}

std::vector<FitResult> multi_seed_fit(std::span<const Trajectory> data, const EnvKernel& env,
                                      const FitConfig& config, int num_seeds, int keep_top) {
  if (keep_top < 1 || keep_top > num_seeds) {
    throw InvalidArgument("need num_seeds >= keep_top >= 1");
  }
  return select_top(fit_seeds(data, env, config, num_seeds), keep_top);
}

}  // namespace swirl
