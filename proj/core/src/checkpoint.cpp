#include "isoimm/checkpoint.hpp"

#include "isoimm/io.hpp"

#include <nlohmann/json.hpp>

#include <stdexcept>

namespace isoimm {

using nlohmann::json;

std::string role_name(NetworkRole role) {
  switch (role) {
    case NetworkRole::Encoder:
      return "encoder";
    case NetworkRole::Decoder:
      return "decoder";
    case NetworkRole::Dual:
      return "dual";
  }
  return "unknown";
}

NetworkRole parse_role(const std::string& name) {
  if (name == "encoder") return NetworkRole::Encoder;
  if (name == "decoder") return NetworkRole::Decoder;
  if (name == "dual") return NetworkRole::Dual;
  throw std::invalid_argument("unknown network role '" + name + "'");
}

std::string checkpoint_to_json(const Checkpoint& ckpt) {
  json j;
  j["role"] = role_name(ckpt.role);
  j["seed"] = ckpt.seed;
  j["spec"] = {{"layer_dims", ckpt.params.spec.layer_dims},
               {"activation", activation_name(ckpt.params.spec.activation)}};
  json layers = json::array();
  for (const auto& L : ckpt.params.layers) layers.push_back({{"w", L.weight.data()}, {"b", L.bias.data()}});
  j["layers"] = std::move(layers);
  return j.dump(1) + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
    Checkpoint ckpt;
    ckpt.role = parse_role(j.at("role").get<std::string>());
    ckpt.seed = j.at("seed").get<std::uint64_t>();
    ckpt.params.spec.layer_dims = j.at("spec").at("layer_dims").get<std::vector<std::size_t>>();
    ckpt.params.spec.activation = parse_activation(j.at("spec").at("activation").get<std::string>());
    ckpt.params.spec.validate();
    const auto& dims = ckpt.params.spec.layer_dims;
    const auto& layers = j.at("layers");
    if (layers.size() != ckpt.params.spec.num_layers()) {
      throw std::runtime_error("layer count does not match spec");
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
      DenseLayer L{Tensor({dims[l + 1], dims[l]}, layers[l].at("w").get<std::vector<double>>()),
                   Tensor({dims[l + 1]}, layers[l].at("b").get<std::vector<double>>())};
      ckpt.params.layers.push_back(std::move(L));
    }
    ckpt.params.validate();
    return ckpt;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_text_file(path, checkpoint_to_json(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_json(read_text_file(path)); }

}  // namespace isoimm
