#include "camalign/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "camalign/errors.hpp"

namespace camalign {

namespace {

constexpr char kMagic[8] = {'C', 'A', 'M', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
  std::vector<std::uint8_t>& data() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw IntegrityError("checkpoint truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

std::uint32_t crc(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(::crc32(::crc32(0L, Z_NULL, 0), bytes.data(), static_cast<uInt>(bytes.size())));
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const ModelState& state) {
  validate(state);
  nlohmann::json cfg;
  to_json(cfg, state.config);
  const std::string header = nlohmann::json{{"config", cfg}, {"stage", state.stage}}.dump();

  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(header.size()));
  w.bytes(header.data(), header.size());
  w.u32(static_cast<std::uint32_t>(state.params.size()));
  for (const auto& p : state.params) {
    w.u32(static_cast<std::uint32_t>(p.name.size()));
    w.bytes(p.name.data(), p.name.size());
    w.u32(static_cast<std::uint32_t>(p.values.size()));
    for (float v : p.values) w.f32(v);
  }
  w.u32(crc(w.data()));
  return std::move(w.data());
}

ModelState deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof kMagic + 4 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw IntegrityError("not a checkpoint (bad magic)");
  }
  if (bytes.size() < sizeof kMagic + 8) throw IntegrityError("checkpoint truncated");
  const auto body = bytes.first(bytes.size() - 4);
  Reader tail(bytes.last(4));
  if (tail.u32() != crc(body)) throw IntegrityError("checkpoint CRC mismatch (corrupt or truncated file)");

  Reader r(body);
  r.str(sizeof kMagic);
  if (const auto version = r.u32(); version != kCheckpointVersion) {
    throw IntegrityError("unsupported checkpoint version " + std::to_string(version));
  }
  ModelState state;
  try {
    const auto header = nlohmann::json::parse(r.str(r.u32()));
    from_json(header.at("config"), state.config);
    state.stage = header.at("stage").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("checkpoint header: ") + e.what());
  }
  const auto count = r.u32();
  ModelState reference;
  try {
    reference = init_model(state.config, 0);
  } catch (const ConfigError& e) {
    throw IntegrityError(std::string("checkpoint config invalid: ") + e.what());
  }
  if (count != reference.params.size()) throw IntegrityError("checkpoint tensor count does not match its config");
  for (std::uint32_t t = 0; t < count; ++t) {
    ParamTensor p;
    p.name = r.str(r.u32());
    const auto n = r.u32();
    const auto& ref = reference.params[t];
    if (p.name != ref.name || n != ref.values.size()) {
      throw IntegrityError("checkpoint tensor '" + p.name + "' does not match its config");
    }
    r.need(static_cast<std::size_t>(n) * 4);
    p.shape = ref.shape;
    p.values.resize(n);
    for (auto& v : p.values) v = r.f32();
    state.params.push_back(std::move(p));
  }
  if (r.remaining() != 0) throw IntegrityError("trailing bytes in checkpoint");
  try {
    validate(state);
  } catch (const std::exception& e) {
    throw IntegrityError(std::string("checkpoint content invalid: ") + e.what());
  }
  return state;
}

void save_checkpoint(const ModelState& state, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(state);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint '" + path.string() + "'");
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return deserialize_checkpoint(bytes);
}

}  // namespace camalign
