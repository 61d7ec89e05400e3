#include "gnr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace gnr::ckpt {
namespace {

constexpr char kMagic[8] = {'G', 'N', 'R', 'C', 'K', 'P', 'T', '\0'};

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  template <class T>
  void pod(T v) {
    bytes(&v, sizeof v);
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    bytes(s.data(), s.size());
  }
  std::string& buffer() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string_view data, const std::filesystem::path& path) : data_(data), path_(path) {}
  void bytes(void* p, std::size_t n) {
    if (n > data_.size() - pos_) fail("truncated");
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  template <class T>
  T pod() {
    T v;
    bytes(&v, sizeof v);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    if (n > data_.size() - pos_) fail("truncated string");
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }
  [[noreturn]] void fail(const std::string& why) const {
    throw CheckpointError("corrupt checkpoint " + path_.string() + ": " + why);
  }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
  std::filesystem::path path_;
};

}  // namespace

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

const Tensor& Archive::tensor(const std::string& key) const {
  const auto it = tensors.find(key);
  if (it == tensors.end()) throw CheckpointError("checkpoint has no tensor " + key);
  return it->second;
}

const std::string& Archive::string(const std::string& key) const {
  const auto it = strings.find(key);
  if (it == strings.end()) throw CheckpointError("checkpoint has no field " + key);
  return it->second;
}

void save(const std::filesystem::path& path, const Archive& archive) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.pod(kFormatVersion);
  w.pod(archive.config_hash);
  w.pod(archive.iteration);
  w.pod<std::uint64_t>(archive.strings.size());
  for (const auto& [k, v] : archive.strings) {
    w.str(k);
    w.str(v);
  }
  w.pod<std::uint64_t>(archive.tensors.size());
  for (const auto& [k, t] : archive.tensors) {
    w.str(k);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) w.pod<std::int32_t>(d);
    w.bytes(t.data(), t.numel() * sizeof(float));
  }
  w.pod(fnv1a(w.buffer()));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open " + tmp.string() + " for writing");
    out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
    if (!out) throw CheckpointError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Archive load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < sizeof kMagic + sizeof(std::uint64_t)) throw CheckpointError("corrupt checkpoint " + path.string() + ": too short");

  const std::string_view body(data.data(), data.size() - sizeof(std::uint64_t));
  std::uint64_t stored = 0;
  std::memcpy(&stored, data.data() + body.size(), sizeof stored);
  Reader r(body, path);
  if (std::memcmp(body.data(), kMagic, sizeof kMagic) != 0) r.fail("bad magic");
  if (fnv1a(body) != stored) r.fail("checksum mismatch");

  char magic[sizeof kMagic];
  r.bytes(magic, sizeof magic);
  const auto version = r.pod<std::uint32_t>();
  if (version != kFormatVersion) r.fail("unsupported version " + std::to_string(version));
  Archive a;
  a.config_hash = r.pod<std::uint64_t>();
  a.iteration = r.pod<std::int64_t>();
  const auto n_strings = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_strings; ++i) {
    std::string k = r.str();
    a.strings[k] = r.str();
  }
  const auto n_tensors = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_tensors; ++i) {
    std::string k = r.str();
    const auto rank = r.pod<std::uint32_t>();
    if (rank == 0 || rank > 8) r.fail("bad rank for " + k);
    Shape shape(rank);
    for (auto& d : shape) {
      d = r.pod<std::int32_t>();
      if (d <= 0) r.fail("bad shape for " + k);
    }
    Tensor t(shape);
    r.bytes(t.data(), t.numel() * sizeof(float));
    a.tensors.emplace(std::move(k), std::move(t));
  }
  if (!r.done()) r.fail("trailing bytes");
  return a;
}

}  // namespace gnr::ckpt
