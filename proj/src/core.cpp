#include "defl/core.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

#include <openssl/evp.h>

namespace defl {

namespace {

constexpr char kHexDigits[] = "0123456789abcdef";

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

std::string Digest::hex() const {
  std::string s;
  s.reserve(64);
  for (auto b : bytes) {
    s.push_back(kHexDigits[b >> 4]);
    s.push_back(kHexDigits[b & 0xf]);
  }
  return s;
}

Digest Digest::from_hex(std::string_view hex) {
  if (hex.size() != 64) throw SerializationError("digest hex must have 64 characters");
  Digest d;
  for (std::size_t i = 0; i < 32; ++i) {
    int hi = hex_value(hex[2 * i]);
    int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw SerializationError("invalid hex digit in digest");
    d.bytes[i] = static_cast<std::uint8_t>(hi << 4 | lo);
  }
  return d;
}

Digest sha256(std::span<const std::uint8_t> data) {
  Digest d;
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), d.bytes.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != d.bytes.size()) {
    throw std::runtime_error("EVP_Digest(sha256) failed");
  }
  return d;
}

std::size_t DigestHash::operator()(const Digest& d) const noexcept {
  std::size_t h;
  std::memcpy(&h, d.bytes.data(), sizeof h);
  return h;
}

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::digest(const Digest& d) { raw(d.bytes); }

void ByteWriter::raw(std::span<const std::uint8_t> data) {
  out_.insert(out_.end(), data.begin(), data.end());
}

void ByteReader::need(std::size_t n) const {
  if (data_.size() - pos_ < n) throw SerializationError("truncated input");
}

std::uint8_t ByteReader::u8() {
  need(1);
  return data_[pos_++];
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{data_[pos_ + i]} << (8 * i);
  pos_ += 4;
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{data_[pos_ + i]} << (8 * i);
  pos_ += 8;
  return v;
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

Digest ByteReader::digest() {
  need(32);
  Digest d;
  std::memcpy(d.bytes.data(), data_.data() + pos_, 32);
  pos_ += 32;
  return d;
}

std::span<const std::uint8_t> ByteReader::raw(std::size_t n) {
  need(n);
  auto s = data_.subspan(pos_, n);
  pos_ += n;
  return s;
}

bool all_finite(const WeightVector& w) { return w.allFinite(); }

Bytes canonical_serialize(const WeightVector& w) {
  ByteWriter out;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (!std::isfinite(w[i])) {
      throw SerializationError("non-finite element at index " + std::to_string(i));
    }
    out.f64(w[i]);
  }
  return std::move(out).bytes();
}

WeightVector canonical_deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 8 != 0) throw SerializationError("weight payload length is not a multiple of 8");
  ByteReader in(bytes);
  WeightVector w(static_cast<Eigen::Index>(bytes.size() / 8));
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    w[i] = in.f64();
    if (!std::isfinite(w[i])) throw SerializationError("non-finite element in payload");
  }
  return w;
}

Digest digest(const WeightVector& w) { return sha256(canonical_serialize(w)); }

void encode(ByteWriter& w, const Transaction& tx) {
  w.u8(static_cast<std::uint8_t>(tx.kind));
  w.u32(tx.sender);
  w.u64(tx.target_round);
  if (tx.kind == TxKind::kUpd) w.digest(*tx.payload);
}

Transaction decode_transaction(ByteReader& r) {
  Transaction tx;
  auto kind = r.u8();
  if (kind != static_cast<std::uint8_t>(TxKind::kUpd) && kind != static_cast<std::uint8_t>(TxKind::kAgg)) {
    throw SerializationError("unknown transaction kind");
  }
  tx.kind = static_cast<TxKind>(kind);
  tx.sender = r.u32();
  tx.target_round = r.u64();
  if (tx.kind == TxKind::kUpd) tx.payload = r.digest();
  return tx;
}

Digest tx_id(const Transaction& tx) {
  ByteWriter w;
  encode(w, tx);
  return sha256(w.bytes());
}

std::string to_string(const Transaction& tx) {
  std::ostringstream os;
  os << (tx.kind == TxKind::kUpd ? "UPD(" : "AGG(") << tx.sender << ", " << tx.target_round;
  if (tx.payload) os << ", " << tx.payload->hex().substr(0, 12);
  os << ")";
  return os.str();
}

std::optional<std::string> config_error(const SystemConfig& c) {
  if (c.n < 1) return "n < 1";
  if (c.f < 0) return "f < 0";
  if (c.n < 3 * c.f + 3) return "n < 3f+3";
  if (c.tau < 2) return "tau < 2";
  if (c.d < 1) return "d < 1";
  if (c.rounds < 1) return "rounds < 1";
  if (c.gst_lt <= 0) return "gst_lt <= 0";
  if (c.k && (*c.k < 1 || *c.k > c.n - c.f)) return "k outside [1, n-f]";
  if (c.neighborhood && (*c.neighborhood < 1 || *c.neighborhood > c.n - 2)) {
    return "neighborhood outside [1, n-2]";
  }
  return std::nullopt;
}

void validate_config(const SystemConfig& c) {
  if (auto err = config_error(c)) throw ConfigError(*err);
}

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) { return mix_seed(mix_seed(a) ^ b); }

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix_seed(mix_seed(a, b) ^ c);
}

}  // namespace defl
