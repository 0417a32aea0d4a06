#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace swirl {

using Index = std::size_t;

/// Sizes of the mode, state and action spaces plus the state-history length.
struct Spaces {
  Index num_modes = 1;
  Index num_states = 1;
  Index num_actions = 1;
  Index history_len = 1;

  /// Throws InvalidArgument when a count is zero or S^L overflows Index.
  void validate() const;

  /// S^L. Calls validate().
  Index augmented_size() const;

  bool operator==(const Spaces&) const = default;
};

/// Bijective index over S^L history tuples.
///
/// Layout is row-major with the oldest state as the most significant digit,
/// so for L = 1 the encoding is the identity on state indices. Windows
/// shorter than L are left-padded by replicating their oldest state.
class AugmentedSpace {
 public:
  AugmentedSpace(Index num_states, Index history_len);
  explicit AugmentedSpace(const Spaces& spaces)
      : AugmentedSpace(spaces.num_states, spaces.history_len) {}

  Index history_len() const { return history_len_; }
  Index base_size() const { return base_size_; }
  Index total_size() const { return total_size_; }

  /// window holds (s_{t-L+1}, ..., s_t), oldest first, 1 <= size <= L.
  Index encode(std::span<const Index> window) const;

  /// Oldest-first L-tuple.
  std::vector<Index> decode(Index h) const;

  /// Most recent state of the history.
  Index last(Index h) const { return h % base_size_; }

  /// History obtained by dropping the oldest state and appending next_state.
  Index shift(Index h, Index next_state) const {
    return (h % suffix_size_) * base_size_ + next_state;
  }

  /// Augmented index of every timestep of a state sequence.
  std::vector<Index> encode_sequence(std::span<const Index> states) const;

 private:
  Index history_len_;
  Index base_size_;
  Index total_size_;
  Index suffix_size_;  // S^(L-1)
};

/// Free-function form of AugmentedSpace::encode.
Index encode_history(std::span<const Index> window, const Spaces& spaces);

}  // namespace swirl
