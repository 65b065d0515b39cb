#include "qkd/cascade.hpp"

#include <bit>
#include <cmath>
#include <random>
#include <stdexcept>
#include <unordered_map>

namespace qkd {

void CascadeConfig::validate() const {
  if (n_passes < 2) throw std::invalid_argument("cascade needs at least 2 passes");
  if (k1_override != 0 && k1_override < 4) throw std::invalid_argument("cascade k1 must be >= 4");
}

std::size_t CascadeConfig::initial_block_size(double e_est, std::size_t n) {
  if (n == 0) return 4;
  const double e = std::max(e_est, 1.0 / static_cast<double>(n));
  auto k = static_cast<std::size_t>(std::ceil(0.73 / e));
  k = std::min(k, n / 2);
  return std::max<std::size_t>(k, 4);
}

std::vector<std::uint32_t> pass_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::uint32_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<std::uint32_t>(i);
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng() % i;
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

namespace {

std::vector<std::uint32_t> identity(std::size_t n) {
  std::vector<std::uint32_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<std::uint32_t>(i);
  return perm;
}

}  // namespace

CascadeResponder::CascadeResponder(Bits key) : key_(std::move(key)) { perms_.push_back(identity(key_.size())); }

void CascadeResponder::begin_pass(std::uint32_t pass, std::uint64_t seed) {
  if (pass != perms_.size() + 1) throw std::out_of_range("cascade pass out of order");
  perms_.push_back(pass_permutation(key_.size(), seed));
}

Bits CascadeResponder::answer(std::span<const ParityQuery> queries) const {
  Bits out;
  out.reserve(queries.size());
  for (const auto& q : queries) {
    if (q.pass < 1 || q.pass > perms_.size()) throw std::out_of_range("parity query for unknown pass");
    if (q.length == 0 || q.start > key_.size() || q.length > key_.size() - q.start) {
      throw std::out_of_range("parity query outside key");
    }
    const auto& perm = perms_[q.pass - 1];
    std::uint8_t p = 0;
    for (std::uint64_t i = q.start; i < q.start + q.length; ++i) p ^= key_[perm[i]];
    out.push_back(p);
  }
  return out;
}

LocalParityChannel::LocalParityChannel(Bits alice_key, std::uint64_t seed)
    : responder_(std::move(alice_key)), seed_(seed) {}

std::uint64_t LocalParityChannel::shuffle_seed(std::uint32_t pass) {
  const std::uint64_t s = derive_seed(seed_, pass);
  responder_.begin_pass(pass, s);
  return s;
}

Bits LocalParityChannel::parities(std::span<const ParityQuery> queries) {
  Bits out = responder_.answer(queries);
  disclosed_ += out.size();
  ++exchanges_;
  return out;
}

std::uint8_t block_parity(std::span<const std::uint8_t> bits, std::size_t begin, std::size_t end) {
  if (begin > end || end > bits.size()) throw std::out_of_range("block_parity range outside bits");
  return parity(bits.subspan(begin, end - begin));
}

BinarySearchResult binary_search_error(std::span<const std::uint8_t> bob_block, std::uint8_t alice_block_parity,
                                       const std::function<std::uint8_t(std::size_t, std::size_t)>& alice_parity) {
  if (bob_block.empty() || parity(bob_block) == (alice_block_parity & 1U)) {
    throw std::logic_error("binary_search_error requires odd relative parity");
  }
  std::size_t start = 0, len = bob_block.size(), exchanges = 0;
  std::uint8_t alice_range = alice_block_parity & 1U;
  while (len > 1) {
    const std::size_t half = len / 2;
    const std::uint8_t alice_left = alice_parity(start, half) & 1U;
    ++exchanges;
    if (alice_left != parity(bob_block.subspan(start, half))) {
      len = half;
      alice_range = alice_left;
    } else {
      start += half;
      len -= half;
      alice_range ^= alice_left;
    }
  }
  return {start, exchanges};
}

std::size_t CascadeResult::total_corrections() const {
  std::size_t n = 0;
  for (auto c : corrections_per_pass) n += c;
  return n;
}

namespace {

struct PassLayout {
  std::vector<std::uint32_t> perm;     // shuffled position -> key index
  std::vector<std::uint32_t> inverse;  // key index -> shuffled position
  std::size_t block = 0;
  std::vector<std::uint8_t> alice_parity;
  std::vector<std::uint8_t> bob_parity;
  std::vector<std::uint8_t> searching;

  std::size_t block_of(std::uint32_t key_index) const { return inverse[key_index] / block; }
  std::size_t n_blocks() const { return alice_parity.size(); }
};

struct Search {
  std::uint32_t pass = 0;  // 0-based
  std::size_t block = 0;
  std::uint64_t start = 0;
  std::uint64_t length = 0;
  std::uint8_t alice_parity = 0;
};

class CascadeEngine {
 public:
  CascadeEngine(Bits key, ParityChannel& channel) : key_(std::move(key)), channel_(channel) {}

  CascadeResult run(double e_est, const CascadeConfig& config) {
    config.validate();
    const std::size_t n = key_.size();
    CascadeResult result;
    result.block_size_first = config.k1_override ? config.k1_override : CascadeConfig::initial_block_size(e_est, n);
    result.corrections_per_pass.assign(static_cast<std::size_t>(config.n_passes), 0);
    if (n == 0) {
      result.corrected = std::move(key_);
      return result;
    }

    for (int p = 0; p < config.n_passes; ++p) {
      PassLayout layout;
      layout.perm = p == 0 ? identity(n) : pass_permutation(n, channel_.shuffle_seed(static_cast<std::uint32_t>(p + 1)));
      layout.inverse.resize(n);
      for (std::size_t i = 0; i < n; ++i) layout.inverse[layout.perm[i]] = static_cast<std::uint32_t>(i);
      const std::size_t scaled = result.block_size_first << p;
      layout.block = (scaled >> p) != result.block_size_first ? n : std::min(scaled, n);
      const std::size_t n_blocks = (n + layout.block - 1) / layout.block;
      layout.bob_parity.resize(n_blocks);
      layout.searching.assign(n_blocks, 0);

      std::vector<ParityQuery> top;
      top.reserve(n_blocks);
      for (std::size_t b = 0; b < n_blocks; ++b) {
        const std::size_t begin = b * layout.block;
        const std::size_t len = std::min(layout.block, n - begin);
        top.push_back({static_cast<std::uint32_t>(p + 1), begin, len});
        layout.bob_parity[b] = range_parity(layout, begin, len);
      }
      layout.alice_parity = request(top);
      passes_.push_back(std::move(layout));

      auto& current = passes_.back();
      for (std::size_t b = 0; b < n_blocks; ++b) {
        if (current.alice_parity[b] != current.bob_parity[b]) enqueue(static_cast<std::uint32_t>(p), b);
      }
      corrections_ = 0;
      drain();
      result.corrections_per_pass[static_cast<std::size_t>(p)] = corrections_;
    }
    result.ledger.parity_bits_disclosed = disclosed_;
    result.corrected = std::move(key_);
    return result;
  }

 private:
  std::uint8_t range_parity(const PassLayout& layout, std::uint64_t start, std::uint64_t len) const {
    std::uint8_t p = 0;
    for (std::uint64_t i = start; i < start + len; ++i) p ^= key_[layout.perm[i]];
    return p;
  }

  static std::uint64_t cache_key(const ParityQuery& q) {
    return (static_cast<std::uint64_t>(q.pass) << 58) ^ (q.start << 29) ^ q.length;
  }

  Bits request(const std::vector<ParityQuery>& queries) {
    if (queries.empty()) return {};
    Bits answers = channel_.parities(queries);
    if (answers.size() != queries.size()) throw std::runtime_error("parity response size mismatch");
    disclosed_ += answers.size();
    for (std::size_t i = 0; i < queries.size(); ++i) cache_.emplace(cache_key(queries[i]), answers[i]);
    return answers;
  }

  void enqueue(std::uint32_t pass, std::size_t block) {
    auto& layout = passes_[pass];
    if (layout.searching[block]) return;
    layout.searching[block] = 1;
    const std::size_t begin = block * layout.block;
    const std::size_t len = std::min<std::size_t>(layout.block, key_.size() - begin);
    active_.push_back({pass, block, begin, len, layout.alice_parity[block]});
  }

  void flip(std::uint32_t key_index) {
    key_[key_index] ^= 1U;
    ++corrections_;
    for (std::uint32_t q = 0; q < passes_.size(); ++q) {
      auto& layout = passes_[q];
      const std::size_t b = layout.block_of(key_index);
      layout.bob_parity[b] ^= 1U;
      if (layout.bob_parity[b] != layout.alice_parity[b]) enqueue(q, b);
    }
  }

  // Runs every pending search to completion, one parity exchange per round.
  void drain() {
    while (!active_.empty()) {
      std::vector<Search> waiting;
      std::vector<ParityQuery> queries;
      std::vector<std::size_t> query_slot;
      std::vector<Search> batch;
      batch.swap(active_);
      for (auto& s : batch) {
        auto& layout = passes_[s.pass];
        if (range_parity(layout, s.start, s.length) == s.alice_parity) {
          layout.searching[s.block] = 0;
          continue;
        }
        if (s.length == 1) {
          layout.searching[s.block] = 0;
          flip(layout.perm[s.start]);
          continue;
        }
        const ParityQuery q{s.pass + 1, s.start, s.length / 2};
        if (auto it = cache_.find(cache_key(q)); it != cache_.end()) {
          narrow(s, it->second);
          active_.push_back(s);
          continue;
        }
        query_slot.push_back(waiting.size());
        queries.push_back(q);
        waiting.push_back(s);
      }
      const Bits answers = request(queries);
      for (std::size_t i = 0; i < waiting.size(); ++i) {
        narrow(waiting[i], answers[i]);
        active_.push_back(waiting[i]);
      }
    }
  }

  void narrow(Search& s, std::uint8_t alice_left) const {
    const auto& layout = passes_[s.pass];
    const std::uint64_t half = s.length / 2;
    if (alice_left != range_parity(layout, s.start, half)) {
      s.length = half;
      s.alice_parity = alice_left;
    } else {
      s.start += half;
      s.length -= half;
      s.alice_parity ^= alice_left;
    }
  }

  Bits key_;
  ParityChannel& channel_;
  std::vector<PassLayout> passes_;
  std::vector<Search> active_;
  std::unordered_map<std::uint64_t, std::uint8_t> cache_;
  std::uint64_t disclosed_ = 0;
  std::size_t corrections_ = 0;
};

}  // namespace

CascadeResult run_cascade(Bits bob_key, double e_est, const CascadeConfig& config, ParityChannel& channel) {
  CascadeEngine engine(std::move(bob_key), channel);
  return engine.run(e_est, config);
}

std::uint64_t verify_hash(std::span<const std::uint8_t> key, std::uint64_t salt) {
  const auto words = pack_words(key);
  std::uint64_t h = 0;
  for (int i = 0; i < kVerifyHashBits; ++i) {
    const std::uint64_t row = derive_seed(salt, static_cast<std::uint64_t>(i));
    unsigned acc = 0;
    for (std::size_t w = 0; w < words.size(); ++w) {
      acc += static_cast<unsigned>(std::popcount(words[w] & mix64(row ^ w)));
    }
    h |= static_cast<std::uint64_t>(acc & 1U) << i;
  }
  return h;
}

}  // namespace qkd
