#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace plm::detail {

/// Full form of a lowercase contraction such as "i'm", or nullopt.
std::optional<std::string> expand_contraction(std::string_view word);
std::size_t contraction_table_size();

}  // namespace plm::detail
