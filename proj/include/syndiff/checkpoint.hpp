#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "syndiff/layers.hpp"
#include "syndiff/tensor.hpp"

namespace syndiff {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// On-disk layout, all integers little-endian u32:
///   "SYNDIFF1" | header count | header values | record count | records
/// where each record is
///   name length | UTF-8 name | rank | dims | f32 payload (little-endian).
struct Checkpoint {
  std::vector<std::uint32_t> header;
  std::vector<NamedParameter<float>> records;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Appends every parameter of `params` under `prefix`.
void append_records(Checkpoint& ckpt, const std::string& prefix, const ParameterSet<float>& params);
/// Copies the records named `prefix + name` into `params`. Throws
/// CheckpointError on a missing record or a shape mismatch.
void restore_records(const Checkpoint& ckpt, const std::string& prefix, const ParameterSet<float>& params);

}  // namespace syndiff
