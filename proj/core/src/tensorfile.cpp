#include "cfrg/tensorfile.hpp"

#include <cstring>
#include <fstream>
#include <map>

namespace cfrg {

namespace {
constexpr char kMagic[8] = {'C', 'F', 'R', 'G', 'T', 'F', '0', '1'};
}

void write_tensor_file(const std::filesystem::path& path, const nlohmann::json& meta,
                       const std::vector<std::pair<std::string, Tensor>>& tensors) {
  nlohmann::json header;
  header["meta"] = meta;
  auto& index = header["tensors"] = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    nlohmann::json e;
    e["name"] = name;
    e["dims"] = t.shape();
    e["offset"] = offset;
    offset += t.data().size() * sizeof(real);
    index.push_back(e);
  }
  const std::string htext = header.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  f.write(kMagic, 8);
  uint64_t hlen = htext.size();
  f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  f.write(htext.data(), (std::streamsize)htext.size());
  for (const auto& [name, t] : tensors)
    f.write(reinterpret_cast<const char*>(t.data().data()),
            (std::streamsize)(t.data().size() * sizeof(real)));
  if (!f) throw DataError("short write: " + path.string());
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open tensor file: " + path.string());
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw DataError("not a tensor file: " + path.string());
  uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string htext(hlen, '\0');
  f.read(htext.data(), (std::streamsize)hlen);
  if (!f) throw DataError("truncated tensor file header: " + path.string());
  nlohmann::json header = nlohmann::json::parse(htext);

  TensorFile out;
  out.meta = header.value("meta", nlohmann::json::object());
  for (const auto& e : header.at("tensors")) {
    std::vector<int> dims = e.at("dims").get<std::vector<int>>();
    Tensor t = Tensor::zeros(dims);
    f.read(reinterpret_cast<char*>(t.data().data()),
           (std::streamsize)(t.data().size() * sizeof(real)));
    if (!f) throw DataError("truncated tensor payload: " + path.string());
    out.tensors.emplace_back(e.at("name").get<std::string>(), std::move(t));
  }
  return out;
}

void load_module_state(nn::Module& module, const std::vector<std::pair<std::string, Tensor>>& state,
                       const std::string& prefix) {
  std::map<std::string, const Tensor*> lookup;
  for (const auto& [name, t] : state) lookup[name] = &t;

  auto copy_into = [&](const std::string& name, Tensor dst) {
    auto it = lookup.find(prefix + name);
    if (it == lookup.end()) throw DataError("missing tensor in state: " + prefix + name);
    const Tensor& src = *it->second;
    if (src.shape() != dst.shape())
      throw DataError("shape mismatch loading " + prefix + name);
    std::copy(src.data().begin(), src.data().end(), dst.data().begin());
  };
  for (auto& [name, t] : module.named_parameters()) copy_into(name, t);
  for (auto& [name, t] : module.named_buffers()) copy_into(name, t);
}

std::vector<std::pair<std::string, Tensor>> module_state(const nn::Module& module,
                                                         const std::string& prefix) {
  std::vector<std::pair<std::string, Tensor>> out;
  for (auto& [name, t] : module.named_parameters()) out.emplace_back(prefix + name, t);
  for (auto& [name, t] : module.named_buffers()) out.emplace_back(prefix + name, t);
  return out;
}

}  // namespace cfrg
