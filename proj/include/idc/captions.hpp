#pragma once

#include <string>
#include <vector>

#include "idc/rng.hpp"
#include "idc/scene.hpp"

namespace idc {

// Lowercased whitespace tokenization, shared by captions and metrics.
std::vector<std::string> split_tokens(const std::string& text);
std::string join_tokens(const std::vector<std::string>& tokens);

// Dominant-axis direction of a displacement; horizontal wins ties.
// Canvas y grows downward, so dy > 0 reads "down".
std::string move_direction(double dx, double dy);

// Deterministic canonical caption for an edit, lowercase, no punctuation.
std::string caption_template(const EditInstruction& edit, const Scene& scene);

// What a caption asserts, recovered by matching against the rule tables.
struct ParsedCaption {
  EditCategory category = EditCategory::Same;
  std::string size;     // descriptor slots; empty when not part of the form
  std::string texture;
  std::string color;
  std::string shape;
  std::string value;    // new color / new texture / direction
  bool operator==(const ParsedCaption&) const = default;
};

bool try_invert_caption(const std::string& caption, ParsedCaption* out);
ParsedCaption invert_caption(const std::string& caption);

// k distinct paraphrases of a templated caption, none equal to the input,
// each inverting to the same ParsedCaption. Throws when the rule tables
// cannot produce k distinct outputs.
std::vector<std::string> paraphrase(const std::string& caption, int k,
                                    Rng& rng);

}  // namespace idc
