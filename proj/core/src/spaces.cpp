#include "swirl/spaces.hpp"

#include <limits>
#include <string>

#include "swirl/error.hpp"

namespace swirl {

void Spaces::validate() const {
  if (num_modes == 0) throw InvalidArgument("num_modes must be positive");
  if (num_states == 0) throw InvalidArgument("num_states must be positive");
  if (num_actions == 0) throw InvalidArgument("num_actions must be positive");
  if (history_len == 0) throw InvalidArgument("history_len must be positive");
  Index total = 1;
  for (Index i = 0; i < history_len; ++i) {
    if (total > std::numeric_limits<Index>::max() / num_states) {
      throw InvalidArgument("augmented state count S^L overflows the index range (S=" +
                            std::to_string(num_states) +
                            ", L=" + std::to_string(history_len) + ")");
    }
    total *= num_states;
  }
  // Tables are Z x S^L x A; keep that product addressable too.
  if (total > std::numeric_limits<Index>::max() / num_actions / num_modes) {
    throw InvalidArgument("reward table size Z * S^L * A overflows the index range");
  }
}

Index Spaces::augmented_size() const {
  validate();
  Index total = 1;
  for (Index i = 0; i < history_len; ++i) total *= num_states;
  return total;
}

AugmentedSpace::AugmentedSpace(Index num_states, Index history_len)
    : history_len_(history_len), base_size_(num_states) {
  Spaces probe;
  probe.num_states = num_states;
  probe.history_len = history_len;
  total_size_ = probe.augmented_size();
  suffix_size_ = total_size_ / base_size_;
}

Index AugmentedSpace::encode(std::span<const Index> window) const {
  if (window.empty()) throw InvalidArgument("history window is empty");
  if (window.size() > history_len_) {
    throw InvalidArgument("history window longer than L");
  }
  const Index pad = history_len_ - window.size();
  Index h = 0;
  for (Index i = 0; i < history_len_; ++i) {
    const Index s = i < pad ? window.front() : window[i - pad];
    if (s >= base_size_) {
      throw InvalidArgument("state index " + std::to_string(s) +
                            " out of range for S=" + std::to_string(base_size_));
    }
    h = h * base_size_ + s;
  }
  return h;
}

std::vector<Index> AugmentedSpace::decode(Index h) const {
  if (h >= total_size_) throw InvalidArgument("augmented index out of range");
  std::vector<Index> out(history_len_);
  for (Index i = history_len_; i-- > 0;) {
    out[i] = h % base_size_;
    h /= base_size_;
  }
  return out;
}

std::vector<Index> AugmentedSpace::encode_sequence(std::span<const Index> states) const {
  std::vector<Index> out(states.size());
  for (Index t = 0; t < states.size(); ++t) {
    const Index begin = t + 1 >= history_len_ ? t + 1 - history_len_ : 0;
    out[t] = encode(states.subspan(begin, t + 1 - begin));
  }
  return out;
}

Index encode_history(std::span<const Index> window, const Spaces& spaces) {
  return AugmentedSpace(spaces).encode(window);
}

}  // namespace swirl
