#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "tvs/rng.hpp"

namespace tvs {

// Fixed-length binary latent vector, bit-packed into 64-bit words.
// Value semantics; usable as a hash-set key. Unused high bits of the last
// word are kept zero so equality and hashing work on the raw words.
class LatentState {
 public:
  static constexpr int kWordBits = 64;

  LatentState() = default;
  explicit LatentState(int n_bits) : n_bits_(n_bits), words_((n_bits + kWordBits - 1) / kWordBits, 0) {}

  int size() const { return n_bits_; }

  bool bit(int i) const { return (words_[i / kWordBits] >> (i % kWordBits)) & 1ULL; }

  void set_bit(int i, bool v) {
    const std::uint64_t mask = 1ULL << (i % kWordBits);
    if (v) {
      words_[i / kWordBits] |= mask;
    } else {
      words_[i / kWordBits] &= ~mask;
    }
  }

  int popcount() const {
    int c = 0;
    for (std::uint64_t w : words_) c += __builtin_popcountll(w);
    return c;
  }

  std::span<const std::uint64_t> words() const { return words_; }
  std::span<std::uint64_t> mutable_words() { return words_; }

  template <typename F>
  void for_each_active(F&& f) const {
    for (std::size_t wi = 0; wi < words_.size(); ++wi) {
      std::uint64_t w = words_[wi];
      while (w != 0) {
        const int b = __builtin_ctzll(w);
        f(static_cast<int>(wi) * kWordBits + b);
        w &= w - 1;
      }
    }
  }

  // State whose packed value equals `index` (bit i of index -> latent i).
  static LatentState from_index(int n_bits, std::uint64_t index) {
    LatentState s(n_bits);
    for (std::size_t wi = 0; wi < s.words_.size(); ++wi) {
      s.words_[wi] = index;
      index = 0;
    }
    s.mask_tail();
    return s;
  }

  static LatentState all_ones(int n_bits) {
    LatentState s(n_bits);
    for (auto& w : s.words_) w = ~0ULL;
    s.mask_tail();
    return s;
  }

  // Independent Bernoulli(p[i]) bits; p indexed by latent position.
  template <typename P>
  static LatentState random(int n_bits, P&& p, Rng& rng) {
    LatentState s(n_bits);
    for (int i = 0; i < n_bits; ++i) {
      if (rng.bernoulli(p(i))) s.words_[i / kWordBits] |= 1ULL << (i % kWordBits);
    }
    return s;
  }

  std::uint64_t hash() const {
    std::uint64_t h = 0x51ab6e3f0aa1bd01ULL;
    for (std::uint64_t w : words_) h = mix64(h, w);
    return h;
  }

  friend bool operator==(const LatentState& a, const LatentState& b) {
    return a.n_bits_ == b.n_bits_ && a.words_ == b.words_;
  }

  // Strict total order on the packed value (most significant word first).
  friend bool packed_less(const LatentState& a, const LatentState& b) {
    for (std::size_t i = a.words_.size(); i-- > 0;) {
      if (a.words_[i] != b.words_[i]) return a.words_[i] < b.words_[i];
    }
    return false;
  }

 private:
  void mask_tail() {
    const int tail = n_bits_ % kWordBits;
    if (tail != 0 && !words_.empty()) words_.back() &= (1ULL << tail) - 1;
  }

  int n_bits_ = 0;
  std::vector<std::uint64_t> words_;
};

struct LatentStateHash {
  std::size_t operator()(const LatentState& s) const { return static_cast<std::size_t>(s.hash()); }
};

}  // namespace tvs
