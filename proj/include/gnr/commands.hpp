#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "gnr/nets.hpp"
#include "gnr/tensor.hpp"

namespace gnr::cli {

/// Version string recorded in every run manifest.
const char* version();

/// Parses the command line and runs one command. Exit status: 0 success,
/// 1 runtime failure, 2 invalid input. Errors go to `err` as one line.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// <root>/<YYYYmmdd-HHMMSS>-<command>, with a numeric suffix if taken.
std::filesystem::path make_run_dir(const std::filesystem::path& root, const std::string& command);

/// Rows are the inputs; column 0 is the source and column j > 0 decodes every
/// row with style j - 1. Without styles, the single extra column is the
/// cycle reconstruction back through `back` under each input's own style.
Tensor translation_grid(const nets::Generator& forward, const nets::Generator& back, const std::vector<Tensor>& inputs,
                        const Tensor& styles);

}  // namespace gnr::cli
