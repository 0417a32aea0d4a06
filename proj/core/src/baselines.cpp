#include "swirl/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "swirl/error.hpp"
#include "swirl/logmath.hpp"
#include "swirl/random.hpp"

namespace swirl {

FitResult fit_maxent(std::span<const Trajectory> data, const EnvKernel& env,
                     FitConfig config) {
  config.num_modes = 1;
  config.history_len = 1;
  config.variant = TransitionVariant::kStateIndependent;
  return fit(data, env, config);
}

namespace {

ModePosteriors chain_posteriors(std::span<const Index> states, const ArhmmModel& m,
                                std::span<const double> log_init,
                                std::span<const double> log_emission_table) {
  const Index T = states.size(), Z = m.num_modes, S = m.num_states;
  std::vector<double> log_em(T * Z, 0.0);
  for (Index t = 0; t + 1 < T; ++t) {
    for (Index z = 0; z < Z; ++z) {
      log_em[t * Z + z] = log_emission_table[(z * S + states[t]) * S + states[t + 1]];
    }
  }
  ChainModel chain;
  chain.num_modes = Z;
  chain.log_init = log_init;
  chain.log_emission = log_em;
  chain.context = states.subspan(0, T - 1);
  chain.transition = log_transition_view(m.mode_transition);
  return forward_backward_chain(chain);
}

std::vector<double> log_of(std::span<const double> v) {
  std::vector<double> out(v.size());
  for (Index i = 0; i < v.size(); ++i) out[i] = std::log(v[i]);
  return out;
}

void check_sequence(std::span<const Index> states, Index S) {
  if (states.empty()) throw DataError("empty state sequence");
  for (Index s : states) {
    if (s >= S) throw DataError("state index " + std::to_string(s) + " out of range");
  }
}

// Prior term eps * sum log(parameter) that MAP-EM ascends together with the likelihood.
double log_prior(const ArhmmModel& m, double eps) {
  double acc = 0.0;
  for (double e : m.emission) acc += eps * std::log(e);
  const Index Z = m.num_modes, S = m.num_states;
  if (m.variant == ArhmmVariant::kPlain) {
    for (Index z = 0; z < Z; ++z) {
      for (Index n = 0; n < Z; ++n) acc += eps * m.mode_transition.log_prob(z, 0, n);
    }
  } else {
    for (Index z = 0; z < Z; ++z) {
      for (Index s = 0; s < S; ++s) {
        for (Index n = 0; n < Z; ++n) acc += eps * m.mode_transition.log_prob(z, s, n);
      }
    }
  }
  for (double p : m.init_mode) acc += eps * std::log(p);
  return acc;
}

// Recurrent transition logits: gradient ascent with step acceptance on the
// expected log transition plus its prior term.
ModeTransition update_recurrent_logits(const ModeTransition& current,
                                       std::span<const double> counts, double eps,
                                       double total_steps, const FitConfig& opt) {
  const Index Z = current.num_modes(), S = current.num_states();
  const auto objective = [&](const ModeTransition& mt) {
    double acc = 0.0;
    for (Index z = 0; z < Z; ++z) {
      for (Index s = 0; s < S; ++s) {
        for (Index n = 0; n < Z; ++n) {
          acc += (counts[(z * S + s) * Z + n] + eps) * mt.log_prob(z, s, n);
        }
      }
    }
    return acc / total_steps;
  };
  ModeTransition mt = current;
  double value = objective(mt);
  std::vector<double> grad(Z * S * Z);
  for (int step = 0; step < opt.m_step_steps; ++step) {
    for (Index z = 0; z < Z; ++z) {
      for (Index s = 0; s < S; ++s) {
        double row = 0.0;
        for (Index n = 0; n < Z; ++n) row += counts[(z * S + s) * Z + n] + eps;
        for (Index n = 0; n < Z; ++n) {
          const Index i = (z * S + s) * Z + n;
          grad[i] = (counts[i] + eps - mt.prob(z, s, n) * row) / total_steps;
        }
      }
    }
    bool accepted = false;
    double scale = opt.learning_rate;
    for (int b = 0; b <= opt.max_backtracks; ++b, scale *= 0.5) {
      std::vector<double> logits = mt.logits();
      for (Index i = 0; i < logits.size(); ++i) logits[i] += scale * grad[i];
      ModeTransition trial(Z, S, std::move(logits));
      const double v = objective(trial);
      if (v >= value) {
        mt = std::move(trial);
        value = v;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  return mt;
}

}  // namespace

ModePosteriors arhmm_posteriors(std::span<const Index> states, const ArhmmModel& model) {
  check_sequence(states, model.num_states);
  const auto log_init = log_of(model.init_mode);
  const auto log_em = log_of(model.emission);
  return chain_posteriors(states, model, log_init, log_em);
}

double arhmm_log_likelihood(std::span<const Index> states, const ArhmmModel& model) {
  return std::log(model.init_state.at(states.front())) +
         arhmm_posteriors(states, model).log_likelihood;
}

ArhmmFit fit_arhmm(std::span<const std::vector<Index>> sequences, Index num_states,
                   const ArhmmConfig& config) {
  if (sequences.empty()) throw InvalidArgument("cannot fit an empty data set");
  if (config.num_modes < 1) throw InvalidArgument("num_modes must be >= 1");
  if (!(config.smoothing > 0.0)) throw InvalidArgument("smoothing must be positive");
  const Index Z = config.num_modes, S = num_states;
  const double eps = config.smoothing;
  for (const auto& seq : sequences) check_sequence(seq, S);

  // Empirical bigrams seed every mode; seeded noise breaks the symmetry.
  std::vector<double> bigram(S * S, eps);
  std::vector<double> first(S, eps);
  double total_steps = 0.0;
  for (const auto& seq : sequences) {
    first[seq.front()] += 1.0;
    for (Index t = 0; t + 1 < seq.size(); ++t) bigram[seq[t] * S + seq[t + 1]] += 1.0;
    total_steps += static_cast<double>(seq.size());
  }
  ArhmmModel m;
  m.num_modes = Z;
  m.num_states = S;
  m.variant = config.variant;
  Rng rng(derive_seed(config.seed, 0));
  m.emission.resize(Z * S * S);
  for (Index z = 0; z < Z; ++z) {
    for (Index s = 0; s < S; ++s) {
      double row = 0.0;
      for (Index n = 0; n < S; ++n) {
        const double w = Z == 1 ? 1.0 : std::exp(0.5 * standard_normal(rng));
        m.emission[(z * S + s) * S + n] = bigram[s * S + n] * w;
        row += m.emission[(z * S + s) * S + n];
      }
      for (Index n = 0; n < S; ++n) m.emission[(z * S + s) * S + n] /= row;
    }
  }
  std::vector<double> logits(Z * Z);
  for (double& l : logits) l = standard_normal(rng);
  if (config.variant == ArhmmVariant::kPlain) {
    m.mode_transition = ModeTransition::tied(Z, S, logits);
  } else {
    std::vector<double> full(Z * S * Z);
    for (double& l : full) l = standard_normal(rng);
    m.mode_transition = ModeTransition(Z, S, std::move(full));
  }
  std::vector<double> init(Z);
  for (double& l : init) l = standard_normal(rng);
  softmax_inplace(init);
  m.init_mode = std::move(init);
  double first_total = 0.0;
  for (double f : first) first_total += f;
  m.init_state.resize(S);
  for (Index s = 0; s < S; ++s) m.init_state[s] = first[s] / first_total;

  ArhmmFit out;
  out.seed = config.seed;
  const auto e_step = [&](const ArhmmModel& model, std::vector<ModePosteriors>& post) {
    post.clear();
    double ll = 0.0;
    for (const auto& seq : sequences) {
      post.push_back(arhmm_posteriors(seq, model));
      ll += post.back().log_likelihood + std::log(model.init_state[seq.front()]);
    }
    return ll;
  };
  std::vector<ModePosteriors> post;
  double ll = e_step(m, post);
  double previous = ll + log_prior(m, eps);
  for (int k = 0; k < config.em_iters; ++k) {
    std::vector<double> em(Z * S * S, eps), trans(Z * S * Z, 0.0), init_c(Z, eps);
    for (Index n = 0; n < sequences.size(); ++n) {
      const auto& seq = sequences[n];
      const ModePosteriors& p = post[n];
      for (Index z = 0; z < Z; ++z) init_c[z] += p.marginal(0, z);
      for (Index t = 0; t + 1 < seq.size(); ++t) {
        for (Index z = 0; z < Z; ++z) {
          em[(z * S + seq[t]) * S + seq[t + 1]] += p.marginal(t, z);
          for (Index zn = 0; zn < Z; ++zn) {
            trans[(z * S + seq[t]) * Z + zn] += p.pair(t, z, zn);
          }
        }
      }
    }
    for (Index r = 0; r < Z * S; ++r) {
      double row = 0.0;
      for (Index n = 0; n < S; ++n) row += em[r * S + n];
      for (Index n = 0; n < S; ++n) em[r * S + n] /= row;
    }
    m.emission = std::move(em);
    if (config.variant == ArhmmVariant::kPlain) {
      std::vector<double> tied(Z * Z, eps);
      for (Index z = 0; z < Z; ++z) {
        for (Index s = 0; s < S; ++s) {
          for (Index zn = 0; zn < Z; ++zn) tied[z * Z + zn] += trans[(z * S + s) * Z + zn];
        }
      }
      for (double& v : tied) v = std::log(v);
      m.mode_transition = ModeTransition::tied(Z, S, tied);
    } else {
      m.mode_transition =
          update_recurrent_logits(m.mode_transition, trans, eps, total_steps, config.logits);
    }
    double init_total = 0.0;
    for (double c : init_c) init_total += c;
    for (Index z = 0; z < Z; ++z) m.init_mode[z] = init_c[z] / init_total;

    ll = e_step(m, post);
    const double objective = ll + log_prior(m, eps);
    out.train_ll_trace.push_back(ll);
    out.objective_trace.push_back(objective);
    if (std::abs(objective - previous) < config.tolerance) {
      out.converged = true;
      break;
    }
    previous = objective;
  }
  out.model = std::move(m);
  return out;
}

std::vector<std::vector<Index>> state_sequences(std::span<const Trajectory> data) {
  std::vector<std::vector<Index>> out;
  out.reserve(data.size());
  for (const Trajectory& tr : data) out.push_back(tr.states);
  return out;
}

std::vector<Index> state_sequence_with_successor(const Trajectory& traj, const EnvKernel& env) {
  validate_trajectory(traj, env.num_states(), env.num_actions());
  const auto row = env.row(traj.states.back(), traj.actions.back());
  const auto it = std::find(row.begin(), row.end(), 1.0);
  if (it == row.end()) throw InvalidArgument("successor needs a deterministic environment row");
  std::vector<Index> out = traj.states;
  out.push_back(static_cast<Index>(it - row.begin()));
  return out;
}

ArhmmModel arhmm_from_policies(const DiscreteHmMdp& model,
                               std::span<const PolicyTable> policies) {
  if (model.spaces.history_len != 1) {
    throw InvalidArgument("policy injection needs a history length of 1");
  }
  const Index Z = model.spaces.num_modes, S = model.spaces.num_states,
              A = model.spaces.num_actions;
  if (policies.size() != Z) throw InvalidArgument("one policy per mode is required");
  ArhmmModel m;
  m.num_modes = Z;
  m.num_states = S;
  m.variant = model.mode_transition.state_dependent() ? ArhmmVariant::kRecurrent
                                                      : ArhmmVariant::kPlain;
  m.emission.assign(Z * S * S, 0.0);
  for (Index z = 0; z < Z; ++z) {
    for (Index s = 0; s < S; ++s) {
      for (Index a = 0; a < A; ++a) {
        const double pa = policies[z](s, a);
        for (Index n = 0; n < S; ++n) m.emission[(z * S + s) * S + n] += model.env(s, a, n) * pa;
      }
    }
  }
  m.mode_transition = model.mode_transition;
  m.init_mode = model.init_mode;
  m.init_state = model.init_state;
  return m;
}

std::vector<ComparisonRow> compare_models(std::span<const FitReport> reports) {
  std::vector<ComparisonRow> rows;
  std::vector<std::vector<double>> values;
  for (const FitReport& r : reports) {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const ComparisonRow& c) {
      return c.model == r.model && c.variant == r.variant && c.history_len == r.history_len &&
             c.num_modes == r.num_modes;
    });
    if (it == rows.end()) {
      rows.push_back(ComparisonRow{r.model, r.variant, r.history_len, r.num_modes, 0.0, 0.0});
      values.emplace_back();
      it = rows.end() - 1;
    }
    values[static_cast<Index>(it - rows.begin())].push_back(r.test_ll);
  }
  for (Index i = 0; i < rows.size(); ++i) {
    std::sort(values[i].begin(), values[i].end());
    rows[i].median_test_ll = quantile_linear(values[i], 0.5);
    rows[i].iqr_test_ll = quantile_linear(values[i], 0.75) - quantile_linear(values[i], 0.25);
  }
  const auto name = [](const ComparisonRow& r) {
    return r.model + "/" + r.variant + "/" + std::to_string(r.history_len) + "/" +
           std::to_string(r.num_modes);
  };
  std::stable_sort(rows.begin(), rows.end(), [&](const ComparisonRow& a, const ComparisonRow& b) {
    if (a.median_test_ll != b.median_test_ll) return a.median_test_ll > b.median_test_ll;
    return name(a) < name(b);
  });
  return rows;
}

std::string comparison_to_csv(std::span<const ComparisonRow> rows) {
  std::string out = "model,variant,L,Z,median_test_ll,iqr_test_ll\n";
  char buf[64];
  for (const ComparisonRow& r : rows) {
    out += r.model + ',' + r.variant + ',' + std::to_string(r.history_len) + ',' +
           std::to_string(r.num_modes) + ',';
    std::snprintf(buf, sizeof buf, "%.17g", r.median_test_ll);
    out += buf;
    out += ',';
    std::snprintf(buf, sizeof buf, "%.17g", r.iqr_test_ll);
    out += buf;
    out += '\n';
  }
  return out;
}

}  // namespace swirl
