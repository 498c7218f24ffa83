#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "penguin/data.hpp"
#include "penguin/model.hpp"

namespace penguin {

// Checkpoint file layout:
//   magic "PNGN" | format version u8 | header length u32 LE |
//   UTF-8 JSON header (config, normalization state, parameter manifest
//   with name/shape/offset) | raw little-endian f32 blobs in manifest order.

struct ParamBlob {
    std::string name;
    std::vector<long> shape;
    std::vector<float> data;
};

struct Checkpoint {
    std::uint8_t version = 1;
    PenguinConfig config;
    DataNorm norm;
    std::vector<ParamBlob> params;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

template <typename Real>
Checkpoint checkpoint_from_model(Forecaster<Real>& model, const DataNorm& norm);

// Shapes and names must match the model built from the checkpoint's config.
template <typename Real>
void load_into_model(const Checkpoint& ckpt, Forecaster<Real>& model);

// JSON converters shared by checkpoints, config files and run manifests.
std::string config_to_json_string(const PenguinConfig& config);
PenguinConfig config_from_json_string(const std::string& json_text, bool reject_unknown);

// 64-bit FNV-1a of a string, hex-encoded; used for config hashes in manifests
std::string fnv1a_hex(const std::string& text);

}  // namespace penguin
