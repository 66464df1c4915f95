#pragma once

#include "isoimm/mlp.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace isoimm {

enum class NetworkRole { Encoder, Decoder, Dual };

std::string role_name(NetworkRole role);
NetworkRole parse_role(const std::string& name);

struct Checkpoint {
  MlpParams params;
  NetworkRole role = NetworkRole::Encoder;
  std::uint64_t seed = 0;
};

/// JSON text: {"spec": {"layer_dims", "activation"}, "layers": [{"w", "b"}], "seed", "role"}.
/// Doubles are written with 17 significant digits so reloading is bit-exact.
std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const std::string& text);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace isoimm
