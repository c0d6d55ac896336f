#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mgt {

/// Lowercases ASCII letters, splits on whitespace and emits every ASCII
/// punctuation character as its own token. Non-ASCII bytes are kept inside
/// tokens unchanged.
///
///   "Hello, World!"  ->  hello | , | world | !
///   "it's 5pm."      ->  it | ' | s | 5pm | .
std::vector<std::string> tokenize(std::string_view text);

/// Joins tokens with single spaces; tokenize(join_tokens(t)) == t for any
/// token list produced by tokenize.
std::string join_tokens(const std::vector<std::string>& tokens);

}  // namespace mgt
