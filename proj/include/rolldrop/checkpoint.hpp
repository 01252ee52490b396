#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

#include "rolldrop/nn.hpp"

namespace rolldrop {

// Network checkpoint layout (all integers little-endian):
//   magic      8 bytes  "RLDRPNET"
//   version    u32      kCheckpointVersion
//   kind       u32      0 = policy, 1 = value
//   n_sizes    u32      then n_sizes x u32 layer sizes (input .. output)
//   activation u32      0 = tanh hidden / linear head
//   rolldrop_position u32, rolldrop_p f64, train_dropout_p f64
//   n_params   u64      then n_params x f64, layer by layer, weight (in x out
//                       row-major) followed by bias
//   n_log_std  u32      then n_log_std x f64 (0 for value nets)
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class NetKind : std::uint32_t { Policy = 0, Value = 1 };

using AnyNet = std::variant<nn::PolicyNet, nn::ValueNet>;

std::vector<std::uint8_t> serialize_net(const nn::PolicyNet& net);
std::vector<std::uint8_t> serialize_net(const nn::ValueNet& net);
AnyNet deserialize_net(std::span<const std::uint8_t> bytes);

void save_net(const std::filesystem::path& path, const nn::PolicyNet& net);
void save_net(const std::filesystem::path& path, const nn::ValueNet& net);
nn::PolicyNet load_policy(const std::filesystem::path& path);
nn::ValueNet load_value(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// Little-endian primitive writer/reader shared by checkpoint and batch dumps.
class ByteWriter {
 public:
  void bytes(const void* data, std::size_t n);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}
  void bytes(void* out, std::size_t n);
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  bool at_end() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace rolldrop
