#pragma once

#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "ringformer/tensor.hpp"

namespace ringformer {

// Live/peak accounting of attention score-buffer elements. Each attention op
// leases its score storage here so the memory law (ring N_d*b^2 vs vanilla
// T^2) is observable at runtime.
namespace scorebuf {

inline std::atomic<long long> g_current{0};
inline std::atomic<long long> g_peak{0};

inline void reset() {
  g_current.store(0);
  g_peak.store(0);
}

inline long long peak() { return g_peak.load(); }
inline long long current() { return g_current.load(); }

struct Lease {
  long long n;
  explicit Lease(long long elements) : n(elements) {
    const long long cur = g_current.fetch_add(n) + n;
    long long prev = g_peak.load();
    while (cur > prev && !g_peak.compare_exchange_weak(prev, cur)) {
    }
  }
  Lease(const Lease&) = delete;
  Lease& operator=(const Lease&) = delete;
  ~Lease() { g_current.fetch_sub(n); }
};

}  // namespace scorebuf

struct AttentionConfig {
  std::size_t seq_len = 0;
  std::size_t block_len = 512;
  std::size_t num_heads = 8;
  std::size_t head_dim = 64;
  // 0 runs the full ring; w < num_devices stops after w rotations for
  // locality experiments and is excluded from the exactness contract.
  std::size_t rotation_window = 0;

  AttentionConfig() = default;
  AttentionConfig(std::size_t t, std::size_t block, std::size_t heads = 8,
                  std::size_t dim = 64)
      : seq_len(t), block_len(block), num_heads(heads), head_dim(dim) {
    validate();
  }

  void validate() const {
    if (seq_len == 0) throw ConfigError("attention: seq_len must be >= 1");
    if (block_len == 0) throw ConfigError("attention: block_len must be >= 1");
    if (num_heads == 0 || head_dim == 0) {
      throw ConfigError("attention: heads and head_dim must be >= 1");
    }
  }

  // Blocks longer than the sequence collapse to a single device.
  std::size_t effective_block_len() const {
    return std::min(block_len, seq_len);
  }

  std::size_t num_devices() const {
    const std::size_t b = effective_block_len();
    return (seq_len + b - 1) / b;
  }

  static AttentionConfig for_devices(std::size_t t, std::size_t devices,
                                     std::size_t heads = 8,
                                     std::size_t dim = 64) {
    if (devices == 0) throw ConfigError("attention: devices must be >= 1");
    const std::size_t block = (t + devices - 1) / devices;
    return AttentionConfig(t, block, heads, dim);
  }
};

enum class AttentionMode { ring, vanilla };

// Score elements resident at the peak of one attention evaluation.
inline long long peak_score_elements(const AttentionConfig& cfg,
                                     AttentionMode mode) {
  const long long t = (long long)cfg.seq_len;
  if (mode == AttentionMode::vanilla) return t * t;
  const long long b = (long long)cfg.effective_block_len();
  return (long long)cfg.num_devices() * b * b;
}

// Per-device online-softmax accumulator: running row maxima, weighted value
// numerator and normalizer denominator, folded one K/V block at a time.
template <typename T>
struct RingState {
  Tensor<T> running_max;  // [b]
  Tensor<T> numerator;    // [b x d]
  Tensor<T> denominator;  // [b]
  std::size_t rotation_step = 0;
  std::size_t num_devices = 1;

  static RingState init(std::size_t block_len, std::size_t head_dim,
                        std::size_t devices) {
    RingState s;
    s.running_max = Tensor<T>({block_len});
    for (T& v : s.running_max.data) v = -std::numeric_limits<T>::infinity();
    s.numerator = Tensor<T>({block_len, head_dim});
    s.denominator = Tensor<T>({block_len});
    s.rotation_step = 0;
    s.num_devices = devices;
    return s;
  }
};

template <typename T>
Tensor<T> vanilla_attention(const Tensor<T>& q, const Tensor<T>& k,
                            const Tensor<T>& v);

namespace detail {

template <typename T>
void check_qkv(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 ||
      q.shape[1] != k.shape[1] || k.shape[0] != v.shape[0] ||
      q.shape[1] != v.shape[1]) {
    throw DimensionError("attention: inconsistent Q " + shape_str(q.shape) +
                         ", K " + shape_str(k.shape) + ", V " +
                         shape_str(v.shape));
  }
}

// One online-softmax fold of (K_j, V_j) into the accumulator. `scores` is the
// device's resident b x b buffer; rows of K_j past valid_rows are masked out.
template <typename T>
void fold_block(RingState<T>& state, const Tensor<T>& q_i, const Tensor<T>& k_j,
                const Tensor<T>& v_j, std::size_t valid_rows,
                Tensor<T>& scores, Tensor<T>& k_t) {
  const std::size_t bq = q_i.shape[0];
  const std::size_t bk = k_j.shape[0];
  const std::size_t d = q_i.shape[1];
  const T inv_sqrt_d = T(1) / std::sqrt(T(d));
  const T neg_inf = -std::numeric_limits<T>::infinity();

  for (std::size_t c = 0; c < bk; ++c) {
    for (std::size_t e = 0; e < d; ++e) k_t.at(e, c) = k_j.at(c, e);
  }
  detail::matmul_into(scores.data.data(), q_i.data.data(), k_t.data.data(), bq,
                      d, bk, false);

  for (std::size_t r = 0; r < bq; ++r) {
    T* srow = scores.row(r);
    T row_max = neg_inf;
    for (std::size_t c = 0; c < bk; ++c) {
      srow[c] = (c < valid_rows) ? srow[c] * inv_sqrt_d : neg_inf;
      row_max = std::max(row_max, srow[c]);
    }
    const T prev_max = state.running_max.data[r];
    const T new_max = std::max(prev_max, row_max);
    if (new_max == neg_inf) continue;  // nothing unmasked seen yet

    const T correction =
        (prev_max == neg_inf) ? T{} : fast_exp(prev_max - new_max);
    T* num_row = state.numerator.row(r);
    for (std::size_t e = 0; e < d; ++e) num_row[e] *= correction;
    state.denominator.data[r] *= correction;

    T weight_sum = T{};
    for (std::size_t c = 0; c < bk; ++c) {
      srow[c] = (srow[c] == neg_inf) ? T{} : fast_exp(srow[c] - new_max);
      weight_sum += srow[c];
    }
    state.denominator.data[r] += weight_sum;
    state.running_max.data[r] = new_max;
  }
  detail::matmul_into(state.numerator.data.data(), scores.data.data(),
                      v_j.data.data(), bq, bk, d, true);
}

}  // namespace detail

// Fold one rotated (K, V) block into the accumulator; pure functional form.
template <typename T>
RingState<T> blockwise_partial_update(const RingState<T>& state,
                                      const Tensor<T>& q_i,
                                      const Tensor<T>& k_j,
                                      const Tensor<T>& v_j,
                                      std::size_t valid_rows) {
  detail::check_qkv(q_i, k_j, v_j);
  if (state.rotation_step >= state.num_devices) {
    throw ProtocolError("ring attention: update after " +
                        std::to_string(state.num_devices) +
                        " rotations (ring already complete)");
  }
  if (valid_rows > k_j.shape[0]) {
    throw DimensionError("ring attention: valid_rows " +
                         std::to_string(valid_rows) + " exceeds block rows " +
                         std::to_string(k_j.shape[0]));
  }
  RingState<T> next = state;
  Tensor<T> scores({q_i.shape[0], k_j.shape[0]});
  Tensor<T> k_t({k_j.shape[1], k_j.shape[0]});
  detail::fold_block(next, q_i, k_j, v_j, valid_rows, scores, k_t);
  next.rotation_step = state.rotation_step + 1;
  return next;
}

// numerator / denominator, valid for rows that saw at least one unmasked key.
template <typename T>
Tensor<T> ring_finalize(const RingState<T>& state) {
  Tensor<T> out = state.numerator;
  const std::size_t d = out.shape[1];
  for (std::size_t r = 0; r < out.shape[0]; ++r) {
    const T den = state.denominator.data[r];
    if (den > T{}) {
      T* row = out.row(r);
      const T inv = T(1) / den;
      for (std::size_t e = 0; e < d; ++e) row[e] *= inv;
    }
  }
  return out;
}

// softmax(Q K^T / sqrt(d)) V with the full T x T score matrix materialized;
// the exactness oracle for the ring executor. Row maxima are subtracted
// before exponentiation; normalization is applied to the output rows.
template <typename T>
Tensor<T> vanilla_attention(const Tensor<T>& q, const Tensor<T>& k,
                            const Tensor<T>& v) {
  detail::check_qkv(q, k, v);
  const std::size_t t = q.shape[0];
  const std::size_t tk = k.shape[0];
  const std::size_t d = q.shape[1];
  scorebuf::Lease lease((long long)t * (long long)tk);

  Tensor<T> scores({t, tk});  // zero-initialized by construction
  const Tensor<T> k_t = transpose(k);
  detail::matmul_into(scores.data.data(), q.data.data(), k_t.data.data(), t, d,
                      tk, true);
  const T inv_sqrt_d = T(1) / std::sqrt(T(d));
  Tensor<T> denominators({t});
  for (std::size_t i = 0; i < t; ++i) {
    T* row = scores.row(i);
    T m = row[0];
    for (std::size_t j = 1; j < tk; ++j) m = std::max(m, row[j]);
    m *= inv_sqrt_d;
    T sum = T{};
    for (std::size_t j = 0; j < tk; ++j) {
      row[j] = fast_exp(row[j] * inv_sqrt_d - m);
      sum += row[j];
    }
    denominators.data[i] = sum;
  }
  Tensor<T> out({t, d});
  detail::matmul_into(out.data.data(), scores.data.data(), v.data.data(), t,
                      tk, d, true);
  for (std::size_t i = 0; i < t; ++i) {
    const T inv = T(1) / denominators.data[i];
    T* row = out.row(i);
    for (std::size_t e = 0; e < d; ++e) row[e] *= inv;
  }
  require_finite(out, "vanilla_attention");
  return out;
}

namespace detail {

template <typename T>
struct RingBlock {
  Tensor<T> k;
  Tensor<T> v;
  std::size_t valid_rows = 0;
};

// Thrown inside workers when the ring is torn down after a peer failure;
// filtered out so the root cause is the one reported.
struct RingAborted {};

// Single-producer single-consumer ordered channel between ring neighbors.
// Slots are preallocated for the fixed message count; a short spin before
// the futex wait keeps lockstep handoffs cheap when devices outnumber cores.
// A failing worker poisons every channel so no peer can block forever.
template <typename T>
struct RingChannel {
  // 32-bit sequence word so the wait maps onto a native futex
  static constexpr std::uint32_t poison_mark = 0x40000000u;

  std::vector<RingBlock<T>> slots;
  std::atomic<std::uint32_t> ready{0};
  std::uint32_t sent = 0;    // producer-private
  std::size_t consumed = 0;  // consumer-private

  void reserve(std::size_t messages) { slots.resize(messages); }

  void send(RingBlock<T> blk) {
    slots[sent] = std::move(blk);
    std::uint32_t expected = sent;
    ++sent;
    // a poisoned channel stays poisoned
    if (ready.compare_exchange_strong(expected, sent,
                                      std::memory_order_release)) {
      ready.notify_one();
    }
  }

  RingBlock<T> recv() {
    const std::uint32_t want = std::uint32_t(consumed) + 1;
    std::uint32_t cur = ready.load(std::memory_order_acquire);
    for (int spin = 0; spin < 512 && cur < want; ++spin) {
      cur = ready.load(std::memory_order_acquire);
    }
    while (cur < want) {
      ready.wait(cur, std::memory_order_acquire);
      cur = ready.load(std::memory_order_acquire);
    }
    if (cur >= poison_mark) throw RingAborted{};
    return std::move(slots[consumed++]);
  }

  void poison() {
    std::uint32_t cur = ready.load(std::memory_order_relaxed);
    while (cur < poison_mark &&
           !ready.compare_exchange_weak(cur, poison_mark,
                                        std::memory_order_release)) {
    }
    ready.notify_all();
  }
};

template <typename T>
Tensor<T> slice_rows_padded(const Tensor<T>& x, std::size_t begin,
                            std::size_t rows) {
  Tensor<T> out({rows, x.shape[1]});
  const std::size_t avail = x.shape[0] > begin ? x.shape[0] - begin : 0;
  const std::size_t copy = std::min(rows, avail);
  for (std::size_t r = 0; r < copy; ++r) {
    const T* src = x.row(begin + r);
    std::copy(src, src + x.shape[1], out.row(r));
  }
  return out;
}

}  // namespace detail

// Blockwise ring attention over num_devices() worker threads. Each device
// holds its query block and passes (K, V) blocks around the ring; results are
// exact global attention in real arithmetic. Deterministic: rotation order
// fixes the floating-point summation order regardless of scheduling.
template <typename T>
Tensor<T> ring_attention(const Tensor<T>& q, const Tensor<T>& k,
                         const Tensor<T>& v, const AttentionConfig& cfg) {
  detail::check_qkv(q, k, v);
  if (q.shape[0] != cfg.seq_len || k.shape[0] != cfg.seq_len) {
    throw DimensionError("ring attention: tensors carry " +
                         std::to_string(q.shape[0]) + " rows but config says " +
                         std::to_string(cfg.seq_len));
  }
  if (q.shape[1] != cfg.head_dim) {
    throw DimensionError("ring attention: head_dim " +
                         std::to_string(cfg.head_dim) +
                         " does not match tensor width " +
                         std::to_string(q.shape[1]));
  }
  const std::size_t devices = cfg.num_devices();
  const std::size_t block = cfg.effective_block_len();
  const std::size_t t = cfg.seq_len;
  const std::size_t d = cfg.head_dim;

  if (devices == 1 && cfg.rotation_window == 0) {
    return vanilla_attention(q, k, v);
  }

  const std::size_t steps = cfg.rotation_window == 0
                                ? devices
                                : std::min(cfg.rotation_window, devices);

  Tensor<T> out({t, d});
  std::vector<detail::RingChannel<T>> channels(devices);
  for (auto& ch : channels) ch.reserve(steps > 0 ? steps - 1 : 0);
  std::vector<std::exception_ptr> failures(devices);
  std::atomic<bool> aborted{false};
  std::vector<std::thread> workers;
  workers.reserve(devices);

  for (std::size_t dev = 0; dev < devices; ++dev) {
    workers.emplace_back([&, dev] {
      try {
        if (testhook::fail_ring_device.load(std::memory_order_relaxed) ==
            int(dev)) {
          throw Error("injected device failure");
        }
        scorebuf::Lease lease((long long)block * (long long)block);
        Tensor<T> scores({block, block});
        Tensor<T> k_t({d, block});

        const std::size_t q_begin = dev * block;
        const std::size_t valid_q = std::min(block, t - q_begin);
        const Tensor<T> q_block = detail::slice_rows_padded(q, q_begin, block);
        detail::RingBlock<T> cur{
            detail::slice_rows_padded(k, q_begin, block),
            detail::slice_rows_padded(v, q_begin, block),
            std::min(block, t - q_begin)};

        RingState<T> state = RingState<T>::init(block, d, devices);
        for (std::size_t step = 0; step < steps; ++step) {
          detail::fold_block(state, q_block, cur.k, cur.v, cur.valid_rows,
                             scores, k_t);
          state.rotation_step++;
          if (step + 1 < steps) {
            // pass K/V to the previous neighbor; blocks visit device i in
            // ascending order i, i+1, ... mod N_d
            channels[(dev + devices - 1) % devices].send(std::move(cur));
            cur = channels[dev].recv();
          }
        }
        const Tensor<T> result = ring_finalize(state);
        for (std::size_t r = 0; r < valid_q; ++r) {
          const T* src = result.row(r);
          std::copy(src, src + d, out.row(q_begin + r));
        }
      } catch (...) {
        failures[dev] = std::current_exception();
        aborted.store(true);
        for (auto& ch : channels) ch.poison();
      }
    });
  }
  for (auto& w : workers) w.join();
  if (aborted.load()) {
    // report the root failure, not the teardown of its peers
    for (std::size_t dev = 0; dev < devices; ++dev) {
      if (!failures[dev]) continue;
      try {
        std::rethrow_exception(failures[dev]);
      } catch (const detail::RingAborted&) {
        continue;
      } catch (const std::exception& e) {
        throw ExecutionError("ring attention: device " + std::to_string(dev) +
                             " failed: " + e.what());
      }
    }
    throw ExecutionError("ring attention: aborted without a recorded cause");
  }
  require_finite(out, "ring_attention");
  return out;
}

// Row-normalized attention score map as CSV, one query row per line.
template <typename T>
void export_attention_map(const Tensor<T>& q, const Tensor<T>& k,
                          const AttentionConfig& cfg, const std::string& path) {
  if (q.rank() != 2 || k.rank() != 2 || q.shape[1] != k.shape[1]) {
    throw DimensionError("attention map: incompatible Q " + shape_str(q.shape) +
                         " and K " + shape_str(k.shape));
  }
  if (cfg.seq_len > 4096 || q.shape[0] > 4096) {
    throw ConfigError("attention map: sequence length " +
                      std::to_string(q.shape[0]) + " exceeds export limit 4096");
  }
  Tensor<T> scores = matmul(q, transpose(k));
  const T inv_sqrt_d = T(1) / std::sqrt(T(q.shape[1]));
  for (T& s : scores.data) s *= inv_sqrt_d;
  scores = softmax_rows(scores);

  std::ofstream os(path);
  if (!os) throw IoError("attention map: cannot open '" + path + "' for write");
  os << std::setprecision(9);
  for (std::size_t r = 0; r < scores.shape[0]; ++r) {
    for (std::size_t c = 0; c < scores.shape[1]; ++c) {
      if (c) os << ',';
      os << scores.at(r, c);
    }
    os << '\n';
  }
  if (!os.good()) throw IoError("attention map: write to '" + path + "' failed");
}

}  // namespace ringformer
