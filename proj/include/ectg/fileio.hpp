#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "ectg/nn/tensor.hpp"

namespace ectg {

/// Thrown when an input file does not exist or cannot be opened.
class MissingInputError : public Error {
 public:
  using Error::Error;
};

std::string read_file(const std::filesystem::path& path);

/// Writes to a temporary sibling, then renames over `path`.
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace ectg
