#include "idc/captions.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace idc {

namespace {

// Slot placeholders used by the rule tables. {color}/{texture} describe the
// target object; {vcolor}/{vtexture}/{dir} carry the new value.
const std::vector<std::vector<std::string>> kPatterns[kNumCategories] = {
    // Color
    {
        {"the", "{size}", "{texture}", "{shape}", "turned", "{vcolor}"},
        {"the", "{size}", "{texture}", "{shape}", "became", "{vcolor}"},
        {"the", "{size}", "{texture}", "{shape}", "changed", "to", "{vcolor}"},
        {"the", "{size}", "{texture}", "{shape}", "is", "now", "{vcolor}"},
        {"the", "color", "of", "the", "{size}", "{texture}", "{shape}",
         "changed", "to", "{vcolor}"},
    },
    // Texture
    {
        {"the", "{size}", "{color}", "{shape}", "became", "{vtexture}"},
        {"the", "{size}", "{color}", "{shape}", "turned", "{vtexture}"},
        {"the", "{size}", "{color}", "{shape}", "changed", "to", "{vtexture}"},
        {"the", "{size}", "{color}", "{shape}", "is", "now", "{vtexture}"},
        {"the", "texture", "of", "the", "{size}", "{color}", "{shape}",
         "changed", "to", "{vtexture}"},
    },
    // Move
    {
        {"the", "{size}", "{color}", "{shape}", "moved", "{dir}"},
        {"the", "{size}", "{color}", "{shape}", "shifted", "{dir}"},
        {"the", "{size}", "{color}", "{shape}", "slid", "{dir}"},
        {"the", "{size}", "{color}", "{shape}", "went", "{dir}"},
        {"the", "{size}", "{color}", "{shape}", "was", "moved", "{dir}"},
    },
    // Add
    {
        {"a", "{size}", "{color}", "{shape}", "was", "added"},
        {"a", "{size}", "{color}", "{shape}", "appeared"},
        {"a", "{size}", "{color}", "{shape}", "was", "placed"},
        {"a", "{size}", "{color}", "{shape}", "showed", "up"},
        {"someone", "added", "a", "{size}", "{color}", "{shape}"},
    },
    // Drop
    {
        {"the", "{size}", "{texture}", "{shape}", "was", "removed"},
        {"the", "{size}", "{texture}", "{shape}", "was", "deleted"},
        {"the", "{size}", "{texture}", "{shape}", "was", "dropped"},
        {"the", "{size}", "{texture}", "{shape}", "disappeared"},
        {"someone", "removed", "the", "{size}", "{texture}", "{shape}"},
    },
    // Same
    {
        {"no", "change", "was", "made"},
        {"nothing", "changed"},
        {"nothing", "was", "modified"},
        {"the", "image", "stayed", "the", "same"},
        {"no", "difference", "can", "be", "seen"},
    },
};

bool is_size(const std::string& w) { return w == "small" || w == "large"; }
bool is_texture(const std::string& w) { return w == "solid" || w == "striped"; }
bool is_shape(const std::string& w) {
  return w == "circle" || w == "square" || w == "triangle";
}
bool is_color(const std::string& w) {
  for (int i = 0; i < kNumColors; ++i)
    if (w == color_name(i)) return true;
  return false;
}
bool is_dir(const std::string& w) {
  return w == "left" || w == "right" || w == "up" || w == "down";
}

bool slot_accepts(const std::string& slot, const std::string& word) {
  if (slot == "{size}") return is_size(word);
  if (slot == "{texture}" || slot == "{vtexture}") return is_texture(word);
  if (slot == "{color}" || slot == "{vcolor}") return is_color(word);
  if (slot == "{shape}") return is_shape(word);
  if (slot == "{dir}") return is_dir(word);
  return false;
}

bool match_pattern(const std::vector<std::string>& pattern,
                   const std::vector<std::string>& tokens,
                   ParsedCaption* out) {
  if (pattern.size() != tokens.size()) return false;
  ParsedCaption parsed;
  for (size_t i = 0; i < pattern.size(); ++i) {
    const std::string& p = pattern[i];
    const std::string& w = tokens[i];
    if (p.front() != '{') {
      if (p != w) return false;
      continue;
    }
    if (!slot_accepts(p, w)) return false;
    if (p == "{size}") parsed.size = w;
    else if (p == "{texture}") parsed.texture = w;
    else if (p == "{color}") parsed.color = w;
    else if (p == "{shape}") parsed.shape = w;
    else parsed.value = w;  // {vcolor} / {vtexture} / {dir}
  }
  *out = parsed;
  return true;
}

std::string instantiate(const std::vector<std::string>& pattern,
                        const ParsedCaption& slots) {
  std::vector<std::string> words;
  words.reserve(pattern.size());
  for (const std::string& p : pattern) {
    if (p.front() != '{') words.push_back(p);
    else if (p == "{size}") words.push_back(slots.size);
    else if (p == "{texture}") words.push_back(slots.texture);
    else if (p == "{color}") words.push_back(slots.color);
    else if (p == "{shape}") words.push_back(slots.shape);
    else words.push_back(slots.value);
  }
  return join_tokens(words);
}

}  // namespace

std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    if (std::isspace(uint8_t(c))) {
      if (!cur.empty()) tokens.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(char(std::tolower(uint8_t(c))));
    }
  }
  if (!cur.empty()) tokens.push_back(cur);
  return tokens;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

std::string move_direction(double dx, double dy) {
  if (std::fabs(dx) >= std::fabs(dy)) return dx < 0 ? "left" : "right";
  return dy < 0 ? "up" : "down";
}

std::string caption_template(const EditInstruction& edit, const Scene& scene) {
  auto target = [&]() -> const SceneObject& {
    if (edit.target < 0 || edit.target >= int(scene.objects.size()))
      throw std::invalid_argument("caption_template: bad target index " +
                                  std::to_string(edit.target));
    return scene.objects[edit.target];
  };
  ParsedCaption slots;
  slots.category = edit.category;
  switch (edit.category) {
    case EditCategory::Same:
      break;
    case EditCategory::Color: {
      const SceneObject& o = target();
      slots.size = size_name(o.size);
      slots.texture = texture_name(o.striped);
      slots.shape = shape_name(o.shape);
      slots.value = color_name(edit.new_color);
      break;
    }
    case EditCategory::Texture: {
      const SceneObject& o = target();
      slots.size = size_name(o.size);
      slots.color = color_name(o.color);
      slots.shape = shape_name(o.shape);
      slots.value = texture_name(edit.new_striped);
      break;
    }
    case EditCategory::Move: {
      const SceneObject& o = target();
      slots.size = size_name(o.size);
      slots.color = color_name(o.color);
      slots.shape = shape_name(o.shape);
      slots.value = move_direction(edit.dx, edit.dy);
      break;
    }
    case EditCategory::Add: {
      const SceneObject& o = edit.new_object;
      slots.size = size_name(o.size);
      slots.color = color_name(o.color);
      slots.shape = shape_name(o.shape);
      break;
    }
    case EditCategory::Drop: {
      const SceneObject& o = target();
      slots.size = size_name(o.size);
      slots.texture = texture_name(o.striped);
      slots.shape = shape_name(o.shape);
      break;
    }
  }
  return instantiate(kPatterns[int(edit.category)][0], slots);
}

bool try_invert_caption(const std::string& caption, ParsedCaption* out) {
  const std::vector<std::string> tokens = split_tokens(caption);
  for (int cat = 0; cat < kNumCategories; ++cat) {
    for (const auto& pattern : kPatterns[cat]) {
      ParsedCaption parsed;
      if (match_pattern(pattern, tokens, &parsed)) {
        parsed.category = EditCategory(cat);
        *out = parsed;
        return true;
      }
    }
  }
  return false;
}

ParsedCaption invert_caption(const std::string& caption) {
  ParsedCaption parsed;
  if (!try_invert_caption(caption, &parsed))
    throw std::invalid_argument("invert_caption: '" + caption +
                                "' matches no rule pattern");
  return parsed;
}

std::vector<std::string> paraphrase(const std::string& caption, int k,
                                    Rng& rng) {
  if (k == 0) return {};
  const ParsedCaption slots = invert_caption(caption);
  std::vector<std::string> pool;
  for (const auto& pattern : kPatterns[int(slots.category)]) {
    std::string s = instantiate(pattern, slots);
    if (s != caption) pool.push_back(s);
  }
  if (int(pool.size()) < k)
    throw std::runtime_error(
        "paraphrase: rule tables yield only " + std::to_string(pool.size()) +
        " distinct variants of '" + caption + "', need " + std::to_string(k));
  // Fisher-Yates with the caller's stream, then take the first k.
  for (size_t i = pool.size(); i > 1; --i)
    std::swap(pool[i - 1], pool[size_t(rng.range(int64_t(i)))]);
  pool.resize(size_t(k));
  return pool;
}

}  // namespace idc
