#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>

namespace qfmts {

/// A fully assembled prompt for one LLM call: instruction, demonstrations
/// and serialized inputs, sent as a single user message.
struct PromptBundle {
  std::string template_name;
  std::string text;
  std::size_t demonstration_count = 0;

  bool operator==(const PromptBundle&) const = default;
};

/// Lowercase hex SHA-256 of the prompt text.
std::string prompt_sha256(std::string_view text);

/// Substitutes every `{{key}}` placeholder. Throws qfmts::Error when the
/// template names a key that `values` lacks.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

/// Raw bytes of a file under data/ compiled into the library, e.g.
/// "data/templates/direct.txt".
std::string_view builtin_resource(std::string_view relative_path);

/// Built-in template by short name ("direct", "reason_phase1",
/// "reason_phase2", "annotation").
std::string_view builtin_template(std::string_view name);

}  // namespace qfmts
