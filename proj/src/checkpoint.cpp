#include "rolldrop/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "rolldrop/errors.hpp"

namespace rolldrop {
namespace {

constexpr char kMagic[8] = {'R', 'L', 'D', 'R', 'P', 'N', 'E', 'T'};
constexpr std::uint32_t kActivationTanh = 0;
// Guards against absurd allocations when reading garbage.
constexpr std::uint64_t kMaxParams = 1ull << 32;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

void write_body(ByteWriter& w, NetKind kind, const nn::Mlp& body, std::size_t rolldrop_position,
                double rolldrop_p, double train_dropout_p, std::span<const double> log_std) {
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(kind));
  w.u32(static_cast<std::uint32_t>(body.sizes().size()));
  for (std::size_t s : body.sizes()) w.u32(static_cast<std::uint32_t>(s));
  w.u32(kActivationTanh);
  w.u32(static_cast<std::uint32_t>(rolldrop_position));
  w.f64(rolldrop_p);
  w.f64(train_dropout_p);
  w.u64(body.param_count());
  for (double p : body.params()) w.f64(p);
  w.u32(static_cast<std::uint32_t>(log_std.size()));
  for (double s : log_std) w.f64(s);
}

}  // namespace

void ByteWriter::bytes(const void* data, std::size_t n) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  buf_.insert(buf_.end(), p, p + n);
}
void ByteWriter::u32(std::uint32_t v) { bytes(&v, sizeof v); }
void ByteWriter::u64(std::uint64_t v) { bytes(&v, sizeof v); }
void ByteWriter::f64(double v) { bytes(&v, sizeof v); }

void ByteReader::bytes(void* out, std::size_t n) {
  if (remaining() < n) {
    throw CorruptPayload("truncated payload: needed " + std::to_string(n) + " bytes at offset " +
                         std::to_string(pos_) + ", " + std::to_string(remaining()) + " left");
  }
  std::memcpy(out, data_.data() + pos_, n);
  pos_ += n;
}
std::uint32_t ByteReader::u32() {
  std::uint32_t v;
  bytes(&v, sizeof v);
  return v;
}
std::uint64_t ByteReader::u64() {
  std::uint64_t v;
  bytes(&v, sizeof v);
  return v;
}
double ByteReader::f64() {
  double v;
  bytes(&v, sizeof v);
  return v;
}

std::vector<std::uint8_t> serialize_net(const nn::PolicyNet& net) {
  ByteWriter w;
  write_body(w, NetKind::Policy, net.body, net.rolldrop_position, net.rolldrop_p,
             net.train_dropout_p, net.log_std);
  return w.take();
}

std::vector<std::uint8_t> serialize_net(const nn::ValueNet& net) {
  ByteWriter w;
  write_body(w, NetKind::Value, net.body, 0, 0.0, 0.0, {});
  return w.take();
}

AnyNet deserialize_net(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw CorruptPayload("not a network checkpoint");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CorruptPayload("unsupported checkpoint version " + std::to_string(version) +
                         " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint32_t kind = r.u32();
  if (kind > 1) throw CorruptPayload("unknown network kind " + std::to_string(kind));
  const std::uint32_t n_sizes = r.u32();
  if (n_sizes < 2 || n_sizes > 64) throw CorruptPayload("implausible layer count");
  std::vector<std::size_t> sizes(n_sizes);
  for (auto& s : sizes) {
    s = r.u32();
    if (s == 0) throw CorruptPayload("zero-width layer");
  }
  if (r.u32() != kActivationTanh) throw CorruptPayload("unknown activation");
  const std::uint32_t position = r.u32();
  const double rolldrop_p = r.f64();
  const double train_dropout_p = r.f64();
  const std::uint64_t n_params = r.u64();
  if (n_params > kMaxParams) throw CorruptPayload("implausible parameter count");

  nn::Mlp body(sizes);
  if (n_params != body.param_count()) throw CorruptPayload("parameter count does not match layer sizes");
  if (r.remaining() < n_params * sizeof(double)) throw CorruptPayload("truncated parameter block");
  for (double& p : body.params()) p = r.f64();
  const std::uint32_t n_log_std = r.u32();
  std::vector<double> log_std(n_log_std);
  for (double& s : log_std) s = r.f64();
  if (!r.at_end()) throw CorruptPayload("trailing bytes after checkpoint");

  if (kind == static_cast<std::uint32_t>(NetKind::Value)) {
    if (body.output_size() != 1) throw CorruptPayload("value network must have one output");
    return nn::ValueNet{std::move(body)};
  }
  nn::PolicyNet net;
  net.body = std::move(body);
  net.log_std = std::move(log_std);
  net.rolldrop_position = position;
  net.rolldrop_p = rolldrop_p;
  net.train_dropout_p = train_dropout_p;
  try {
    nn::validate(net);
  } catch (const std::exception& e) {
    throw CorruptPayload(std::string("invalid policy checkpoint: ") + e.what());
  }
  return net;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void save_net(const std::filesystem::path& path, const nn::PolicyNet& net) {
  write_file(path, serialize_net(net));
}
void save_net(const std::filesystem::path& path, const nn::ValueNet& net) {
  write_file(path, serialize_net(net));
}

nn::PolicyNet load_policy(const std::filesystem::path& path) {
  auto net = deserialize_net(read_file(path));
  if (!std::holds_alternative<nn::PolicyNet>(net))
    throw CorruptPayload(path.string() + " holds a value network, not a policy");
  return std::get<nn::PolicyNet>(std::move(net));
}

nn::ValueNet load_value(const std::filesystem::path& path) {
  auto net = deserialize_net(read_file(path));
  if (!std::holds_alternative<nn::ValueNet>(net))
    throw CorruptPayload(path.string() + " holds a policy network, not a value network");
  return std::get<nn::ValueNet>(std::move(net));
}

}  // namespace rolldrop
