#include "swirl/model.hpp"

#include <cmath>
#include <sstream>

#include "swirl/error.hpp"
#include "swirl/logmath.hpp"

namespace swirl {

namespace {

constexpr double kRowTol = 1e-9;

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

}  // namespace

EnvKernel::EnvKernel(Index num_states, Index num_actions)
    : num_states_(num_states),
      num_actions_(num_actions),
      probs_(num_states * num_actions * num_states, 0.0) {}

EnvKernel::EnvKernel(Index num_states, Index num_actions, std::vector<double> probs)
    : num_states_(num_states), num_actions_(num_actions), probs_(std::move(probs)) {
  if (probs_.size() != num_states * num_actions * num_states) {
    throw InvalidArgument("environment kernel must have S*A*S entries");
  }
}

EnvKernel EnvKernel::deterministic(Index num_states, Index num_actions,
                                   std::span<const Index> next_state) {
  if (next_state.size() != num_states * num_actions) {
    throw InvalidArgument("deterministic kernel needs S*A successor entries");
  }
  EnvKernel env(num_states, num_actions);
  for (Index s = 0; s < num_states; ++s) {
    for (Index a = 0; a < num_actions; ++a) {
      const Index next = next_state[s * num_actions + a];
      if (next >= num_states) throw InvalidArgument("successor state out of range");
      env(s, a, next) = 1.0;
    }
  }
  return env;
}

bool EnvKernel::is_deterministic() const {
  for (Index s = 0; s < num_states_; ++s) {
    for (Index a = 0; a < num_actions_; ++a) {
      int ones = 0;
      for (double p : row(s, a)) {
        if (p == 1.0) {
          ++ones;
        } else if (p != 0.0) {
          return false;
        }
      }
      if (ones != 1) return false;
    }
  }
  return true;
}

RewardTable::RewardTable(Index num_modes, Index num_histories, Index num_actions,
                         double fill)
    : num_modes_(num_modes),
      num_histories_(num_histories),
      num_actions_(num_actions),
      values_(num_modes * num_histories * num_actions, fill) {}

RewardTable::RewardTable(Index num_modes, Index num_histories, Index num_actions,
                         std::vector<double> values)
    : num_modes_(num_modes),
      num_histories_(num_histories),
      num_actions_(num_actions),
      values_(std::move(values)) {
  if (values_.size() != num_modes * num_histories * num_actions) {
    throw InvalidArgument("reward table must have Z*S^L*A entries");
  }
}

ModeTransition::ModeTransition(Index num_modes, Index num_states,
                               std::vector<double> logits)
    : num_modes_(num_modes),
      num_states_(num_states),
      state_dependent_(true),
      logits_(std::move(logits)) {
  if (logits_.size() != num_modes * num_states * num_modes) {
    throw InvalidArgument("mode transition needs Z*S*Z logits");
  }
  refresh();
}

ModeTransition ModeTransition::tied(Index num_modes, Index num_states,
                                    std::span<const double> logits) {
  if (logits.size() != num_modes * num_modes) {
    throw InvalidArgument("tied mode transition needs Z*Z logits");
  }
  std::vector<double> full(num_modes * num_states * num_modes);
  for (Index z = 0; z < num_modes; ++z) {
    for (Index s = 0; s < num_states; ++s) {
      for (Index n = 0; n < num_modes; ++n) {
        full[(z * num_states + s) * num_modes + n] = logits[z * num_modes + n];
      }
    }
  }
  ModeTransition out(num_modes, num_states, std::move(full));
  out.state_dependent_ = false;
  return out;
}

ModeTransition ModeTransition::uniform(Index num_modes, Index num_states,
                                       bool state_dependent) {
  if (state_dependent) {
    return ModeTransition(num_modes, num_states,
                          std::vector<double>(num_modes * num_states * num_modes, 0.0));
  }
  const std::vector<double> zeros(num_modes * num_modes, 0.0);
  return tied(num_modes, num_states, zeros);
}

std::vector<double> ModeTransition::tied_logits() const {
  std::vector<double> out(num_modes_ * num_modes_);
  for (Index z = 0; z < num_modes_; ++z) {
    for (Index n = 0; n < num_modes_; ++n) out[z * num_modes_ + n] = logit(z, 0, n);
  }
  return out;
}

void ModeTransition::refresh() {
  probs_ = logits_;
  log_probs_.resize(logits_.size());
  for (Index r = 0; r < num_modes_ * num_states_; ++r) {
    std::span<double> row(probs_.data() + r * num_modes_, num_modes_);
    std::span<const double> lrow(logits_.data() + r * num_modes_, num_modes_);
    const double lse = log_sum_exp(lrow);
    for (Index n = 0; n < num_modes_; ++n) {
      log_probs_[r * num_modes_ + n] = lrow[n] - lse;
    }
    softmax_inplace(row);
  }
}

void validate_trajectory(const Trajectory& traj, Index num_states, Index num_actions) {
  if (traj.states.empty()) throw DataError("trajectory is empty");
  if (traj.states.size() != traj.actions.size()) {
    throw DataError("trajectory has " + std::to_string(traj.states.size()) +
                    " states but " + std::to_string(traj.actions.size()) + " actions");
  }
  for (Index t = 0; t < traj.states.size(); ++t) {
    if (traj.states[t] >= num_states) {
      throw DataError("state index " + std::to_string(traj.states[t]) + " at step " +
                      std::to_string(t) + " out of range (S=" +
                      std::to_string(num_states) + ")");
    }
    if (traj.actions[t] >= num_actions) {
      throw DataError("action index " + std::to_string(traj.actions[t]) + " at step " +
                      std::to_string(t) + " out of range (A=" +
                      std::to_string(num_actions) + ")");
    }
  }
}

std::vector<std::string> validate_model(const DiscreteHmMdp& model) {
  std::vector<std::string> v;
  const Spaces& sp = model.spaces;
  Index num_hist = 0;
  try {
    num_hist = sp.augmented_size();
  } catch (const InvalidArgument& e) {
    v.push_back(std::string("spaces: ") + e.what());
    return v;
  }
  const Index S = sp.num_states, A = sp.num_actions, Z = sp.num_modes;

  if (model.env.num_states() != S || model.env.num_actions() != A) {
    v.push_back("env: shape does not match spaces");
  } else {
    for (Index s = 0; s < S; ++s) {
      for (Index a = 0; a < A; ++a) {
        double sum = 0.0;
        bool bad_entry = false;
        for (double p : model.env.row(s, a)) {
          if (!(p >= 0.0 && p <= 1.0)) bad_entry = true;
          sum += p;
        }
        if (bad_entry) {
          v.push_back("env: row (s=" + std::to_string(s) + ", a=" + std::to_string(a) +
                      ") has an entry outside [0, 1]");
        }
        if (!(std::abs(sum - 1.0) <= kRowTol)) {
          v.push_back("env: row (s=" + std::to_string(s) + ", a=" + std::to_string(a) +
                      ") sums to " + fmt(sum));
        }
      }
    }
  }

  const RewardTable& r = model.rewards;
  if (r.num_modes() != Z || r.num_histories() != num_hist || r.num_actions() != A) {
    v.push_back("rewards: shape must be Z x S^L x A");
  } else {
    for (Index i = 0; i < r.data().size(); ++i) {
      if (!std::isfinite(r.data()[i])) {
        v.push_back("rewards: non-finite entry at flat index " + std::to_string(i));
        break;
      }
    }
  }

  const ModeTransition& mt = model.mode_transition;
  if (mt.num_modes() != Z || mt.num_states() != S) {
    v.push_back("mode_transition: shape must be Z x S x Z");
  } else {
    for (double l : mt.logits()) {
      if (!std::isfinite(l)) {
        v.push_back("mode_transition: non-finite logit");
        break;
      }
    }
  }

  auto check_simplex = [&](const std::vector<double>& p, Index n, const char* name) {
    if (p.size() != n) {
      v.push_back(std::string(name) + ": expected " + std::to_string(n) + " entries");
      return;
    }
    double sum = 0.0;
    for (double x : p) {
      if (!(x >= 0.0 && x <= 1.0)) {
        v.push_back(std::string(name) + ": entry outside [0, 1]");
        return;
      }
      sum += x;
    }
    if (!(std::abs(sum - 1.0) <= kRowTol)) {
      v.push_back(std::string(name) + ": sums to " + fmt(sum));
    }
  };
  check_simplex(model.init_state, S, "init_state");
  check_simplex(model.init_mode, Z, "init_mode");

  if (!(model.gamma >= 0.0 && model.gamma < 1.0)) {
    v.push_back("gamma: discount " + fmt(model.gamma) + " outside [0, 1)");
  }
  if (!(model.alpha > 0.0) || !std::isfinite(model.alpha)) {
    v.push_back("alpha: temperature " + fmt(model.alpha) + " must be positive");
  }
  return v;
}

}  // namespace swirl
