#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace defl {

/// Flat model parameters. Every element must be finite.
using WeightVector = Eigen::VectorXd;
using Bytes = std::vector<std::uint8_t>;
using NodeId = std::uint32_t;
using RoundId = std::uint64_t;
/// Simulated time in integer ticks.
using SimTime = std::int64_t;

// Error hierarchy. Each carries a human readable reason in what().
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SerializationError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct DimensionError : Error {
  using Error::Error;
};
struct ParameterError : Error {
  using Error::Error;
};
struct InsufficientCandidatesError : Error {
  using Error::Error;
};
struct NotFound : Error {
  using Error::Error;
};
struct PartitionError : Error {
  using Error::Error;
};
struct DivergenceError : Error {
  using Error::Error;
};
struct ContractError : Error {
  using Error::Error;
};

/// 32-byte SHA-256 content hash.
struct Digest {
  std::array<std::uint8_t, 32> bytes{};

  std::string hex() const;
  static Digest from_hex(std::string_view hex);

  auto operator<=>(const Digest&) const = default;
};

Digest sha256(std::span<const std::uint8_t> data);

struct DigestHash {
  std::size_t operator()(const Digest& d) const noexcept;
};

/// Little-endian fixed-width writer for wire and hashing formats.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void digest(const Digest& d);
  void raw(std::span<const std::uint8_t> data);

  const Bytes& bytes() const& { return out_; }
  Bytes bytes() && { return std::move(out_); }
  std::size_t size() const { return out_.size(); }

 private:
  Bytes out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  Digest digest();
  std::span<const std::uint8_t> raw(std::size_t n);

  bool done() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const;

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

bool all_finite(const WeightVector& w);

/// 8*d bytes, IEEE-754 binary64 little-endian per element.
Bytes canonical_serialize(const WeightVector& w);
WeightVector canonical_deserialize(std::span<const std::uint8_t> bytes);

Digest digest(const WeightVector& w);

/// One-byte tag leading every wire message.
enum class MessageKind : std::uint8_t {
  kNewView = 1,
  kPrepare = 2,
  kVote = 3,
  kPreCommit = 4,
  kCommit = 5,
  kDecide = 6,
  kSyncRequest = 7,
  kSyncResponse = 8,
  kTransaction = 9,
  kFetchRequest = 10,
  kFetchResponse = 11,
};

enum class TxKind : std::uint8_t { kUpd = 1, kAgg = 2 };

/// Ordered-broadcast payload. Weights travel by digest only.
struct Transaction {
  TxKind kind = TxKind::kAgg;
  NodeId sender = 0;
  RoundId target_round = 0;
  std::optional<Digest> payload;

  static Transaction upd(NodeId sender, RoundId round, const Digest& d) {
    return {TxKind::kUpd, sender, round, d};
  }
  static Transaction agg(NodeId sender, RoundId round) {
    return {TxKind::kAgg, sender, round, std::nullopt};
  }

  bool operator==(const Transaction&) const = default;
};

void encode(ByteWriter& w, const Transaction& tx);
Transaction decode_transaction(ByteReader& r);
/// Hash of the encoded transaction; identifies duplicates in the ordered log.
Digest tx_id(const Transaction& tx);
std::string to_string(const Transaction& tx);

struct SystemConfig {
  int n = 6;
  int f = 1;
  int d = 1;
  int tau = 2;
  int rounds = 10;
  std::int64_t gst_lt = 100;
  // Unset means "derive from the available candidate count at aggregation time".
  std::optional<int> k;
  std::optional<int> neighborhood;
};

/// Empty when every bound holds; otherwise names the first violated bound.
std::optional<std::string> config_error(const SystemConfig& c);
/// Throws ConfigError when config_error() reports a violation.
void validate_config(const SystemConfig& c);

/// splitmix64 finalizer; used to derive independent seeds from a base seed.
std::uint64_t mix_seed(std::uint64_t x);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c);

}  // namespace defl
