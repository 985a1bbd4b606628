#pragma once

// Parameter checkpoints: "PCKP", u32 version, u32 tensor count, then per
// tensor u16 name length, name bytes, u8 rank, u64 extents, f64 data.
// Scalar metadata (model configuration) is stored as rank-0 tensors whose
// names start with "meta/".

#include "ponita/tensor.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace ponita::checkpoint {

struct Checkpoint {
  std::map<std::string, ad::Array<double>> tensors;
  std::map<std::string, double> meta;
};

void write(const Checkpoint& ck, const std::filesystem::path& file);
Checkpoint read(const std::filesystem::path& file);

template <class T>
Checkpoint capture(const ad::ParameterStore<T>& params, std::map<std::string, double> meta = {});

/// Copies tensor values into matching parameters. Missing tensors or shape
/// mismatches throw.
template <class T>
void restore(const Checkpoint& ck, ad::ParameterStore<T>& params);

double meta_or(const Checkpoint& ck, const std::string& key, double fallback);
double meta_at(const Checkpoint& ck, const std::string& key);

}  // namespace ponita::checkpoint
