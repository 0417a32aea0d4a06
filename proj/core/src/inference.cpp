#include "swirl/inference.hpp"

#include <cmath>

#include "swirl/error.hpp"
#include "swirl/logmath.hpp"

namespace swirl {

namespace {

ModePosteriors uniform_posteriors(Index T, Index Z) {
  ModePosteriors p;
  p.num_steps = T;
  p.num_modes = Z;
  p.marginals.assign(T * Z, 1.0 / static_cast<double>(Z));
  p.pairs.assign((T > 0 ? T - 1 : 0) * Z * Z, 1.0 / static_cast<double>(Z * Z));
  p.log_likelihood = kNegInf;
  p.policy_log_likelihood = kNegInf;
  p.degenerate = true;
  return p;
}

}  // namespace

LogTransitionView log_transition_view(const ModeTransition& mt) {
  // ModeTransition stores (z, s, z') row-major.
  const double* base = mt.num_modes() == 0 ? nullptr : &mt.log_prob_row(0, 0)[0];
  return LogTransitionView{base, mt.num_states() * mt.num_modes(), mt.num_modes(), 1};
}

ModePosteriors forward_backward_chain(const ChainModel& chain) {
  const Index Z = chain.num_modes;
  if (Z == 0) throw InvalidArgument("forward-backward needs at least one mode");
  if (chain.log_init.size() != Z || chain.log_emission.size() % Z != 0) {
    throw InvalidArgument("forward-backward: inconsistent table sizes");
  }
  const Index T = chain.log_emission.size() / Z;
  if (T == 0) throw InvalidArgument("forward-backward: empty sequence");
  if (chain.context.size() + 1 != T) {
    throw InvalidArgument("forward-backward: need T-1 transition contexts");
  }
  const auto& e = chain.log_emission;
  const auto& trans = chain.transition;

  std::vector<double> la(T * Z), lb(T * Z, 0.0), buf(Z);
  for (Index z = 0; z < Z; ++z) la[z] = chain.log_init[z] + e[z];
  for (Index t = 1; t < T; ++t) {
    const Index c = chain.context[t - 1];
    for (Index z = 0; z < Z; ++z) {
      for (Index zp = 0; zp < Z; ++zp) buf[zp] = la[(t - 1) * Z + zp] + trans(zp, c, z);
      la[t * Z + z] = log_sum_exp(buf) + e[t * Z + z];
    }
  }
  const double ll = log_sum_exp(std::span<const double>(la.data() + (T - 1) * Z, Z));
  if (!(ll > kNegInf) || std::isnan(ll)) return uniform_posteriors(T, Z);

  for (Index t = T - 1; t-- > 0;) {
    const Index c = chain.context[t];
    for (Index z = 0; z < Z; ++z) {
      for (Index zn = 0; zn < Z; ++zn) {
        buf[zn] = trans(z, c, zn) + e[(t + 1) * Z + zn] + lb[(t + 1) * Z + zn];
      }
      lb[t * Z + z] = log_sum_exp(buf);
    }
  }

  ModePosteriors post;
  post.num_steps = T;
  post.num_modes = Z;
  post.log_likelihood = ll;
  post.policy_log_likelihood = ll;
  post.marginals.resize(T * Z);
  post.pairs.resize((T - 1) * Z * Z);
  for (Index t = 0; t < T; ++t) {
    double sum = 0.0;
    for (Index z = 0; z < Z; ++z) {
      const double v = std::exp(la[t * Z + z] + lb[t * Z + z] - ll);
      post.marginals[t * Z + z] = v;
      sum += v;
    }
    for (Index z = 0; z < Z; ++z) post.marginals[t * Z + z] /= sum;
  }
  for (Index t = 0; t + 1 < T; ++t) {
    const Index c = chain.context[t];
    double sum = 0.0;
    double* out = post.pairs.data() + t * Z * Z;
    for (Index z = 0; z < Z; ++z) {
      for (Index zn = 0; zn < Z; ++zn) {
        const double v = std::exp(la[t * Z + z] + trans(z, c, zn) + e[(t + 1) * Z + zn] +
                                  lb[(t + 1) * Z + zn] - ll);
        out[z * Z + zn] = v;
        sum += v;
      }
    }
    for (Index i = 0; i < Z * Z; ++i) out[i] /= sum;
  }
  return post;
}

ModePosteriors forward_backward(const Trajectory& traj,
                                std::span<const PolicyTable> policies,
                                const ModeTransition& mode_transition,
                                std::span<const double> init_mode,
                                const AugmentedSpace& aug, double env_log_likelihood) {
  const Index Z = policies.size();
  if (Z == 0 || init_mode.size() != Z || mode_transition.num_modes() != Z) {
    throw InvalidArgument("forward-backward: mode counts disagree");
  }
  const Index T = traj.length();
  if (T == 0 || traj.actions.size() != T) {
    throw InvalidArgument("forward-backward: malformed trajectory");
  }
  const std::vector<Index> hist = aug.encode_sequence(traj.states);
  std::vector<double> emission(T * Z);
  for (Index t = 0; t < T; ++t) {
    for (Index z = 0; z < Z; ++z) {
      emission[t * Z + z] = policies[z].log_prob(hist[t], traj.actions[t]);
    }
  }
  std::vector<double> log_init(Z);
  for (Index z = 0; z < Z; ++z) log_init[z] = std::log(init_mode[z]);

  ChainModel chain;
  chain.num_modes = Z;
  chain.log_init = log_init;
  chain.log_emission = emission;
  chain.context = std::span<const Index>(traj.states.data(), T - 1);
  chain.transition = log_transition_view(mode_transition);
  ModePosteriors post = forward_backward_chain(chain);
  if (!post.degenerate) post.log_likelihood = post.policy_log_likelihood + env_log_likelihood;
  return post;
}

double environment_log_likelihood(const Trajectory& traj, const DiscreteHmMdp& model) {
  double ll = std::log(model.init_state.at(traj.states.front()));
  for (Index t = 0; t + 1 < traj.length(); ++t) {
    ll += std::log(model.env(traj.states[t], traj.actions[t], traj.states[t + 1]));
  }
  return ll;
}

ModePosteriors forward_backward(const Trajectory& traj, const DiscreteHmMdp& model,
                                std::span<const PolicyTable> policies) {
  validate_trajectory(traj, model.spaces.num_states, model.spaces.num_actions);
  return forward_backward(traj, policies, model.mode_transition, model.init_mode,
                          AugmentedSpace(model.spaces),
                          environment_log_likelihood(traj, model));
}

double sequence_log_likelihood(const Trajectory& traj, const DiscreteHmMdp& model,
                               std::span<const PolicyTable> policies) {
  return forward_backward(traj, model, policies).log_likelihood;
}

std::vector<Index> map_segments(const ModePosteriors& posteriors) {
  const Index T = posteriors.num_steps, Z = posteriors.num_modes;
  std::vector<Index> labels(T, 0);
  for (Index t = 0; t < T; ++t) {
    double best = posteriors.marginal(t, 0);
    for (Index z = 1; z < Z; ++z) {
      if (posteriors.marginal(t, z) > best) {
        best = posteriors.marginal(t, z);
        labels[t] = z;
      }
    }
  }
  return labels;
}

std::vector<Index> viterbi_chain(const ChainModel& chain) {
  const Index Z = chain.num_modes;
  const Index T = chain.log_emission.size() / Z;
  if (T == 0 || chain.context.size() + 1 != T) {
    throw InvalidArgument("viterbi: inconsistent chain");
  }
  std::vector<double> score(T * Z);
  std::vector<Index> back(T * Z, 0);
  for (Index z = 0; z < Z; ++z) score[z] = chain.log_init[z] + chain.log_emission[z];
  for (Index t = 1; t < T; ++t) {
    const Index c = chain.context[t - 1];
    for (Index z = 0; z < Z; ++z) {
      Index arg = 0;
      double best = score[(t - 1) * Z] + chain.transition(0, c, z);
      for (Index zp = 1; zp < Z; ++zp) {
        const double v = score[(t - 1) * Z + zp] + chain.transition(zp, c, z);
        if (v > best) {
          best = v;
          arg = zp;
        }
      }
      score[t * Z + z] = best + chain.log_emission[t * Z + z];
      back[t * Z + z] = arg;
    }
  }
  std::vector<Index> path(T);
  Index arg = 0;
  for (Index z = 1; z < Z; ++z) {
    if (score[(T - 1) * Z + z] > score[(T - 1) * Z + arg]) arg = z;
  }
  path[T - 1] = arg;
  for (Index t = T - 1; t > 0; --t) path[t - 1] = back[t * Z + path[t]];
  return path;
}

std::vector<Index> viterbi_segments(const Trajectory& traj, const DiscreteHmMdp& model,
                                    std::span<const PolicyTable> policies) {
  const Index Z = policies.size();
  const Index T = traj.length();
  const AugmentedSpace aug(model.spaces);
  const std::vector<Index> hist = aug.encode_sequence(traj.states);
  std::vector<double> emission(T * Z), log_init(Z);
  for (Index t = 0; t < T; ++t) {
    for (Index z = 0; z < Z; ++z) {
      emission[t * Z + z] = policies[z].log_prob(hist[t], traj.actions[t]);
    }
  }
  for (Index z = 0; z < Z; ++z) log_init[z] = std::log(model.init_mode[z]);
  ChainModel chain{Z, log_init, emission,
                   std::span<const Index>(traj.states.data(), T - 1),
                   log_transition_view(model.mode_transition)};
  return viterbi_chain(chain);
}

}  // namespace swirl
