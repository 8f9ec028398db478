#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cfrg/nn.hpp"
#include "cfrg/tensor.hpp"

namespace cfrg {

// Binary container for named tensors with a JSON metadata header.
// Layout: magic "CFRGTF01" | u64 header length | header JSON | raw f64 payload.
struct TensorFile {
  nlohmann::json meta;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void write_tensor_file(const std::filesystem::path& path, const nlohmann::json& meta,
                       const std::vector<std::pair<std::string, Tensor>>& tensors);
TensorFile read_tensor_file(const std::filesystem::path& path);

// Copies matching entries into a module's parameters and buffers.
// Every module tensor must be present with the right shape.
void load_module_state(nn::Module& module, const std::vector<std::pair<std::string, Tensor>>& state,
                       const std::string& prefix = "");

std::vector<std::pair<std::string, Tensor>> module_state(const nn::Module& module,
                                                         const std::string& prefix = "");

}  // namespace cfrg
