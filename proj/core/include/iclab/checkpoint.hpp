#pragma once

#include "iclab/linear_transformer.hpp"

#include <filesystem>
#include <string>

namespace iclab::tf {

inline constexpr int kCheckpointFormatVersion = 1;

/// Text dump with hexfloat entries, so loading reproduces every bit.
void save_checkpoint(const std::filesystem::path& path, const TransformerParams& params);
TransformerParams load_checkpoint(const std::filesystem::path& path);

/// Conventional file name for a trained model: tf_d{d}_n{n}_L{L}.ckpt
std::string checkpoint_name(int d, int n, int L);

}  // namespace iclab::tf
