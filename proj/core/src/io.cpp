#include "swirl/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "swirl/error.hpp"

namespace swirl {

using Json = nlohmann::ordered_json;

namespace {

Json parse_document(const std::string& text, const char* format) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw DataError(std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("format") || doc["format"] != format) {
    throw DataError(std::string("expected a document with format \"") + format + "\"");
  }
  return doc;
}

template <typename T>
T field(const Json& obj, const char* key) {
  if (!obj.contains(key)) throw DataError(std::string("missing field '") + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw DataError(std::string("bad field '") + key + "': " + e.what());
  }
}

Json model_json(const DiscreteHmMdp& m) {
  Json j;
  j["format"] = kModelFormat;
  j["spaces"] = {{"num_modes", m.spaces.num_modes},
                 {"num_states", m.spaces.num_states},
                 {"num_actions", m.spaces.num_actions},
                 {"history_len", m.spaces.history_len}};
  j["gamma"] = m.gamma;
  j["alpha"] = m.alpha;
  j["env"] = m.env.data();
  j["rewards"] = m.rewards.data();
  j["mode_transition"] = {{"state_dependent", m.mode_transition.state_dependent()},
                          {"logits", m.mode_transition.logits()}};
  j["init_state"] = m.init_state;
  j["init_mode"] = m.init_mode;
  return j;
}

DiscreteHmMdp model_from(const Json& j) {
  if (!j.is_object() || !j.contains("format") || j["format"] != kModelFormat) {
    throw DataError(std::string("expected a document with format \"") + kModelFormat + "\"");
  }
  DiscreteHmMdp m;
  const Json& sp = j.at("spaces");
  m.spaces = Spaces{field<Index>(sp, "num_modes"), field<Index>(sp, "num_states"),
                    field<Index>(sp, "num_actions"), field<Index>(sp, "history_len")};
  try {
    m.spaces.validate();
  } catch (const InvalidArgument& e) {
    throw DataError(std::string("invalid spaces: ") + e.what());
  }
  const Index Z = m.spaces.num_modes, S = m.spaces.num_states, A = m.spaces.num_actions;
  const Index H = m.spaces.augmented_size();
  m.gamma = field<double>(j, "gamma");
  m.alpha = field<double>(j, "alpha");

  auto env = field<std::vector<double>>(j, "env");
  auto rewards = field<std::vector<double>>(j, "rewards");
  const Json& mt = j.at("mode_transition");
  auto logits = field<std::vector<double>>(mt, "logits");
  const bool state_dependent = field<bool>(mt, "state_dependent");
  m.init_state = field<std::vector<double>>(j, "init_state");
  m.init_mode = field<std::vector<double>>(j, "init_mode");
  if (env.size() != S * A * S || rewards.size() != Z * H * A || logits.size() != Z * S * Z ||
      m.init_state.size() != S || m.init_mode.size() != Z) {
    throw DataError("model table sizes do not match its spaces");
  }
  m.env = EnvKernel(S, A, std::move(env));
  m.rewards = RewardTable(Z, H, A, std::move(rewards));
  if (state_dependent) {
    m.mode_transition = ModeTransition(Z, S, std::move(logits));
  } else {
    // Stored Z x S x Z; every state slice must equal the s = 0 slice.
    std::vector<double> tied(Z * Z);
    for (Index z = 0; z < Z; ++z) {
      for (Index n = 0; n < Z; ++n) tied[z * Z + n] = logits[(z * S) * Z + n];
    }
    for (Index z = 0; z < Z; ++z) {
      for (Index s = 1; s < S; ++s) {
        for (Index n = 0; n < Z; ++n) {
          if (logits[(z * S + s) * Z + n] != tied[z * Z + n]) {
            throw DataError("state-independent mode transition differs across states");
          }
        }
      }
    }
    m.mode_transition = ModeTransition::tied(Z, S, tied);
  }
  return m;
}

Json config_json(const FitConfig& c) {
  Json j;
  j["variant"] = c.variant_name();
  j["num_modes"] = c.num_modes;
  j["gamma"] = c.gamma;
  j["alpha"] = c.alpha;
  j["em_iters"] = c.em_iters;
  j["softq_iters"] = c.softq_iters;
  j["softq_tol"] = c.softq_tol;
  j["optimizer"] = c.optimizer == Optimizer::kAdam ? "adam" : "gradient_ascent";
  j["learning_rate"] = c.learning_rate;
  j["lr_decay"] = c.lr_decay;
  j["m_step_steps"] = c.m_step_steps;
  j["max_backtracks"] = c.max_backtracks;
  j["reward_on_action"] = c.reward_on_action;
  j["reward_l2"] = c.reward_l2;
  j["tied_warmup"] = c.tied_warmup;
  j["sticky_init"] = c.sticky_init;
  j["reward_max_norm"] = c.reward_max_norm;
  j["transition_stickiness"] = c.transition_stickiness;
  j["seed"] = c.seed;
  j["tolerance"] = c.tolerance;
  j["patience"] = c.patience;
  return j;
}

FitConfig config_from(const Json& j) {
  FitConfig c;
  try {
    const auto [variant, len] = parse_variant_name(field<std::string>(j, "variant"));
    c.variant = variant;
    c.history_len = len;
  } catch (const InvalidArgument& e) {
    throw DataError(e.what());
  }
  c.num_modes = field<Index>(j, "num_modes");
  c.gamma = field<double>(j, "gamma");
  c.alpha = field<double>(j, "alpha");
  c.em_iters = field<int>(j, "em_iters");
  c.softq_iters = field<int>(j, "softq_iters");
  c.softq_tol = field<double>(j, "softq_tol");
  const auto opt = field<std::string>(j, "optimizer");
  if (opt == "adam") {
    c.optimizer = Optimizer::kAdam;
  } else if (opt == "gradient_ascent") {
    c.optimizer = Optimizer::kGradientAscent;
  } else {
    throw DataError("unknown optimizer '" + opt + "'");
  }
  c.learning_rate = field<double>(j, "learning_rate");
  c.lr_decay = field<double>(j, "lr_decay");
  c.m_step_steps = field<int>(j, "m_step_steps");
  c.max_backtracks = field<int>(j, "max_backtracks");
  c.reward_on_action = field<bool>(j, "reward_on_action");
  c.reward_l2 = field<double>(j, "reward_l2");
  c.tied_warmup = field<int>(j, "tied_warmup");
  c.sticky_init = field<double>(j, "sticky_init");
  c.reward_max_norm = field<double>(j, "reward_max_norm");
  c.transition_stickiness = j.value("transition_stickiness", 0.0);
  c.seed = field<std::uint64_t>(j, "seed");
  c.tolerance = field<double>(j, "tolerance");
  c.patience = field<int>(j, "patience");
  return c;
}

// Traces may hold -inf (zero-probability data under the environment kernel);
// JSON has no infinities, so non-finite entries are written as strings.
Json trace_to_json(const std::vector<double>& trace) {
  Json arr = Json::array();
  for (double v : trace) {
    if (std::isfinite(v)) {
      arr.push_back(v);
    } else {
      arr.push_back(std::isnan(v) ? "nan" : v > 0 ? "inf" : "-inf");
    }
  }
  return arr;
}

std::vector<double> trace_from_json(const Json& obj, const char* key) {
  if (!obj.contains(key)) throw DataError(std::string("missing field '") + key + "'");
  const Json& arr = obj.at(key);
  if (!arr.is_array()) throw DataError(std::string("field '") + key + "' is not an array");
  std::vector<double> out;
  for (const Json& v : arr) {
    if (v.is_number()) {
      out.push_back(v.get<double>());
    } else if (v == "-inf") {
      out.push_back(-std::numeric_limits<double>::infinity());
    } else if (v == "inf") {
      out.push_back(std::numeric_limits<double>::infinity());
    } else if (v == "nan") {
      out.push_back(std::numeric_limits<double>::quiet_NaN());
    } else {
      throw DataError(std::string("bad entry in '") + key + "'");
    }
  }
  return out;
}

std::vector<Index> index_array(const Json& line, const char* key, Index line_no) {
  const Json& arr = line.at(key);
  if (!arr.is_array()) {
    throw DataError("line " + std::to_string(line_no) + ": '" + key + "' is not an array");
  }
  std::vector<Index> out;
  out.reserve(arr.size());
  for (Index t = 0; t < arr.size(); ++t) {
    if (!arr[t].is_number_unsigned()) {
      throw DataError("line " + std::to_string(line_no) + ": " + key + "[" + std::to_string(t) +
                      "] is not a non-negative integer");
    }
    out.push_back(arr[t].get<Index>());
  }
  return out;
}

void check_range(const std::vector<Index>& v, Index limit, const char* what, Index line_no) {
  for (Index t = 0; t < v.size(); ++t) {
    if (v[t] >= limit) {
      throw DataError("line " + std::to_string(line_no) + ", position " + std::to_string(t) +
                      ": " + what + " index " + std::to_string(v[t]) + " >= " +
                      std::to_string(limit));
    }
  }
}

}  // namespace

std::string model_to_json(const DiscreteHmMdp& model) { return model_json(model).dump(); }

DiscreteHmMdp model_from_json(const std::string& text) {
  return model_from(parse_document(text, kModelFormat));
}

std::string fit_config_to_json(const FitConfig& config) { return config_json(config).dump(); }

FitConfig fit_config_from_json(const std::string& text) {
  try {
    return config_from(Json::parse(text));
  } catch (const Json::parse_error& e) {
    throw DataError(std::string("malformed JSON: ") + e.what());
  }
}

std::string fit_result_to_json(const FitResult& r) {
  Json j;
  j["format"] = kFitFormat;
  j["seed"] = r.seed;
  j["converged"] = r.converged;
  j["final_train_ll"] = r.final_train_ll();
  j["config"] = config_json(r.config);
  j["train_ll_trace"] = trace_to_json(r.train_ll_trace);
  j["aux_trace"] = trace_to_json(r.aux_trace);
  j["objective_trace"] = trace_to_json(r.objective_trace);
  j["model"] = model_json(r.model);
  return j.dump();
}

FitResult fit_result_from_json(const std::string& text) {
  const Json j = parse_document(text, kFitFormat);
  FitResult r;
  r.seed = field<std::uint64_t>(j, "seed");
  r.converged = field<bool>(j, "converged");
  r.config = config_from(j.at("config"));
  r.train_ll_trace = trace_from_json(j, "train_ll_trace");
  r.aux_trace = trace_from_json(j, "aux_trace");
  r.objective_trace = trace_from_json(j, "objective_trace");
  r.model = model_from(j.at("model"));
  return r;
}

std::string ground_truth_to_json(const DiscreteHmMdp& model, const GroundTruth& truth) {
  Json j;
  j["format"] = kTruthFormat;
  j["home_state"] = truth.home_state;
  j["water_state"] = truth.water_state;
  j["feasible_histories"] = truth.feasible_histories;
  j["model"] = model_json(model);
  return j.dump();
}

std::pair<DiscreteHmMdp, GroundTruth> ground_truth_from_json(const std::string& text) {
  const Json j = parse_document(text, kTruthFormat);
  DiscreteHmMdp model = model_from(j.at("model"));
  GroundTruth gt;
  gt.true_rewards = model.rewards;
  gt.true_mode_transition = model.mode_transition;
  gt.home_state = field<Index>(j, "home_state");
  gt.water_state = field<Index>(j, "water_state");
  gt.feasible_histories = field<std::vector<unsigned char>>(j, "feasible_histories");
  if (gt.feasible_histories.size() != model.rewards.num_histories()) {
    throw DataError("feasible_histories size does not match the model");
  }
  return {std::move(model), std::move(gt)};
}

std::string trajectories_to_jsonl(std::span<const Trajectory> data,
                                  std::span<const std::vector<Index>> labels,
                                  std::optional<Index> num_states,
                                  std::optional<Index> num_actions,
                                  std::optional<std::string> split) {
  if (!labels.empty() && labels.size() != data.size()) {
    throw InvalidArgument("label count does not match trajectory count");
  }
  std::string out;
  if (num_states || num_actions || split) {
    Json header;
    header["format"] = kTrajFormat;
    if (num_states) header["num_states"] = *num_states;
    if (num_actions) header["num_actions"] = *num_actions;
    if (split) header["split"] = *split;
    out += header.dump();
    out += '\n';
  }
  for (Index n = 0; n < data.size(); ++n) {
    Json line;
    line["states"] = data[n].states;
    line["actions"] = data[n].actions;
    if (!labels.empty()) line["labels"] = labels[n];
    out += line.dump();
    out += '\n';
  }
  return out;
}

TrajectoryFile parse_trajectories(const std::string& text) {
  TrajectoryFile file;
  std::istringstream in(text);
  std::string raw;
  Index line_no = 0;
  bool first = true;
  std::optional<bool> labelled;
  while (std::getline(in, raw)) {
    ++line_no;
    if (raw.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json line;
    try {
      line = Json::parse(raw);
    } catch (const Json::parse_error& e) {
      throw DataError("line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
    }
    if (!line.is_object()) {
      throw DataError("line " + std::to_string(line_no) + ": expected a JSON object");
    }
    if (first && line.contains("format")) {
      first = false;
      if (line["format"] != kTrajFormat) {
        throw DataError("line " + std::to_string(line_no) + ": unsupported format");
      }
      try {
        if (line.contains("num_states")) file.declared_states = line["num_states"].get<Index>();
        if (line.contains("num_actions")) {
          file.declared_actions = line["num_actions"].get<Index>();
        }
        if (line.contains("split")) {
          file.split = line["split"].get<std::string>();
          if (*file.split != "train" && *file.split != "test") {
            throw DataError("line " + std::to_string(line_no) + ": split must be train or test");
          }
        }
      } catch (const Json::exception& e) {
        throw DataError("line " + std::to_string(line_no) + ": bad header: " + e.what());
      }
      continue;
    }
    first = false;
    if (!line.contains("states") || !line.contains("actions")) {
      throw DataError("line " + std::to_string(line_no) + ": needs 'states' and 'actions'");
    }
    Trajectory tr{index_array(line, "states", line_no), index_array(line, "actions", line_no)};
    if (tr.states.empty() || tr.states.size() != tr.actions.size()) {
      throw DataError("line " + std::to_string(line_no) +
                      ": states and actions must be non-empty and of equal length");
    }
    if (file.declared_states) check_range(tr.states, *file.declared_states, "state", line_no);
    if (file.declared_actions) check_range(tr.actions, *file.declared_actions, "action", line_no);
    const bool has_labels = line.contains("labels");
    if (labelled && *labelled != has_labels) {
      throw DataError("line " + std::to_string(line_no) +
                      ": labels must be given on every trajectory or none");
    }
    labelled = has_labels;
    if (has_labels) {
      auto lab = index_array(line, "labels", line_no);
      if (lab.size() != tr.states.size()) {
        throw DataError("line " + std::to_string(line_no) + ": labels length mismatch");
      }
      file.labels.push_back(std::move(lab));
    }
    file.trajectories.push_back(std::move(tr));
  }
  return file;
}

IngestedData ingest_trajectories(const std::filesystem::path& path) {
  IngestedData out;
  out.file = parse_trajectories(read_text_file(path));
  if (out.file.trajectories.empty()) {
    throw DataError(path.string() + ": no trajectories");
  }
  Index max_s = 0, max_a = 0;
  for (const Trajectory& tr : out.file.trajectories) {
    for (Index s : tr.states) max_s = std::max(max_s, s);
    for (Index a : tr.actions) max_a = std::max(max_a, a);
  }
  out.num_states = out.file.declared_states.value_or(max_s + 1);
  out.num_actions = out.file.declared_actions.value_or(max_a + 1);
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << text;
    if (!out.flush()) throw DataError("cannot write '" + path.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot move '" + tmp.string() + "' into place: " + ec.message());
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace swirl
