#include "stagecf/checkpoint.hpp"

#include <array>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace stagecf {

namespace {

constexpr std::array<char, 8> kMagic{'S', 'T', 'A', 'G', 'E', 'C', 'F', '1'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
  }
  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void bytes(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }
  void tensors(const std::vector<Eigen::MatrixXd>& list) {
    pod<std::uint64_t>(list.size());
    for (const auto& t : list) {
      pod<std::uint64_t>(static_cast<std::uint64_t>(t.rows()));
      pod<std::uint64_t>(static_cast<std::uint64_t>(t.cols()));
      bytes(reinterpret_cast<const char*>(t.data()), sizeof(double) * static_cast<std::size_t>(t.size()));
    }
  }
  void finish() {
    out_.flush();
    if (!out_) throw std::runtime_error("checkpoint write failed");
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw std::runtime_error("cannot open " + path.string());
  }
  template <typename T>
  T pod() {
    T v{};
    read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
  }
  void read(char* p, std::size_t n) {
    in_.read(p, static_cast<std::streamsize>(n));
    if (!in_) throw std::runtime_error("truncated checkpoint " + path_.string());
  }
  std::vector<Eigen::MatrixXd> tensors() {
    const auto n = pod<std::uint64_t>();
    if (n > 4096) throw std::runtime_error("corrupt checkpoint tensor count");
    std::vector<Eigen::MatrixXd> list;
    list.reserve(n);
    for (std::uint64_t k = 0; k < n; ++k) {
      const auto rows = pod<std::uint64_t>();
      const auto cols = pod<std::uint64_t>();
      Eigen::MatrixXd t(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
      read(reinterpret_cast<char*>(t.data()), sizeof(double) * rows * cols);
      list.push_back(std::move(t));
    }
    return list;
  }

 private:
  std::ifstream in_;
  std::filesystem::path path_;
};

}  // namespace

ConfigMismatch::ConfigMismatch(std::uint64_t expected, std::uint64_t found)
    : std::runtime_error("config hash mismatch: expected " + hex64(expected) + ", checkpoint has " +
                         hex64(found)),
      expected_(expected),
      found_(found) {}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto& p = ckpt.params;
  Writer w(path);
  w.bytes(kMagic.data(), kMagic.size());
  w.pod(kVersion);
  w.pod(ckpt.config_hash);
  w.pod<std::uint64_t>(ckpt.config_json.size());
  w.bytes(ckpt.config_json.data(), ckpt.config_json.size());
  w.pod<std::uint64_t>(p.shape.n_items);
  w.pod<std::uint64_t>(p.shape.time_dim);
  w.pod<std::int64_t>(p.shape.stage_count);
  w.pod<std::uint64_t>(p.shape.hidden.size());
  for (const auto h : p.shape.hidden) w.pod<std::uint64_t>(h);
  w.pod(p.dropout);
  w.tensors(p.tensors);
  w.tensors(p.adam.first_moment);
  w.tensors(p.adam.second_moment);
  w.pod(p.adam.step);
  w.finish();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  std::array<char, 8> magic{};
  r.read(magic.data(), magic.size());
  if (magic != kMagic) throw std::runtime_error(path.string() + " is not a stagecf checkpoint");
  const auto version = r.pod<std::uint32_t>();
  if (version != kVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.config_hash = r.pod<std::uint64_t>();
  const auto json_len = r.pod<std::uint64_t>();
  if (json_len > (1u << 24)) throw std::runtime_error("corrupt checkpoint header");
  ck.config_json.resize(json_len);
  r.read(ck.config_json.data(), json_len);
  auto& p = ck.params;
  p.shape.n_items = r.pod<std::uint64_t>();
  p.shape.time_dim = r.pod<std::uint64_t>();
  p.shape.stage_count = static_cast<int>(r.pod<std::int64_t>());
  const auto n_hidden = r.pod<std::uint64_t>();
  if (n_hidden > 64) throw std::runtime_error("corrupt checkpoint shape");
  p.shape.hidden.resize(n_hidden);
  for (auto& h : p.shape.hidden) h = r.pod<std::uint64_t>();
  p.dropout = r.pod<double>();
  p.tensors = r.tensors();
  p.adam.first_moment = r.tensors();
  p.adam.second_moment = r.tensors();
  p.adam.step = r.pod<std::uint64_t>();
  if (p.tensors.size() != 1 + 2 * p.shape.n_layers()) {
    throw std::runtime_error("checkpoint tensors do not match its shape");
  }
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::uint64_t expected_hash) {
  auto ck = load_checkpoint(path);
  if (ck.config_hash != expected_hash) throw ConfigMismatch(expected_hash, ck.config_hash);
  return ck;
}

}  // namespace stagecf
