#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "reform/nn/tensor.hpp"

// RFCK checkpoint format, all integers and floats little-endian:
//
//   "RFCK" | version u32 | count u32 |
//   count x ( name_len u32 | name bytes (UTF-8) | rank u32 | dims u32 x rank |
//             f64 x prod(dims) )
namespace reform::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor value;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

std::string encode_checkpoint(const std::vector<NamedTensor>& entries);
std::vector<NamedTensor> decode_checkpoint(std::string_view bytes);

std::vector<NamedTensor> snapshot(const std::vector<const Parameter*>& params);
std::vector<NamedTensor> snapshot(const std::vector<Parameter*>& params);

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& entries);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

// Copies values into params by name. Every parameter must be present with a
// matching shape; extra entries are ignored.
void restore(const std::vector<Parameter*>& params, const std::vector<NamedTensor>& entries);

}  // namespace reform::nn
