#include "dlab/semantic_sets.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <string>

namespace dlab {

namespace {

bool sorted_unique(const std::vector<int>& v) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i - 1] >= v[i]) {
      return false;
    }
  }
  return true;
}

bool contains(const std::vector<int>& sorted, int x) {
  return std::binary_search(sorted.begin(), sorted.end(), x);
}

}  // namespace

void validate_sets(const SemanticSets& sets, int num_classes) {
  if (sets.similar.empty() || sets.dissimilar.empty()) {
    throw DomainError("semantic sets: both sets must be nonempty (target " +
                      std::to_string(sets.target) + ")");
  }
  if (!sorted_unique(sets.similar) || !sorted_unique(sets.dissimilar)) {
    throw DomainError("semantic sets: sets must be sorted without duplicates");
  }
  if (contains(sets.similar, sets.target) ||
      contains(sets.dissimilar, sets.target)) {
    throw DomainError("semantic sets: target " + std::to_string(sets.target) +
                      " may not appear in its own sets");
  }
  for (int c : sets.similar) {
    if (contains(sets.dissimilar, c)) {
      throw DomainError("semantic sets: class " + std::to_string(c) +
                        " appears in both sets");
    }
  }
  if (num_classes >= 0) {
    auto in_range = [num_classes](int c) { return c >= 0 && c < num_classes; };
    if (!in_range(sets.target)) {
      throw DomainError("semantic sets: target out of range");
    }
    for (int c : sets.similar) {
      if (!in_range(c)) {
        throw DomainError("semantic sets: similar class " + std::to_string(c) +
                          " out of range");
      }
    }
    for (int c : sets.dissimilar) {
      if (!in_range(c)) {
        throw DomainError("semantic sets: dissimilar class " +
                          std::to_string(c) + " out of range");
      }
    }
  }
}

std::pair<double, double> set_consistency(const SemanticSets& a,
                                          const SemanticSets& b) {
  if (a.target != b.target) {
    throw DomainError("set_consistency: selections are for different targets");
  }
  validate_sets(a);
  validate_sets(b);
  auto overlap = [](const std::vector<int>& x, const std::vector<int>& y) {
    std::size_t shared = 0;
    for (int c : x) {
      if (contains(y, c)) {
        ++shared;
      }
    }
    return static_cast<double>(shared) / static_cast<double>(x.size());
  };
  return {overlap(a.similar, b.similar), overlap(a.dissimilar, b.dissimilar)};
}

namespace {

// Parsing helpers for the line format
//   target=<id>; S1=<id,...>; S2=<id,...>
// Offsets reported in errors are byte positions within the file.

struct Cursor {
  const std::string& text;
  std::size_t pos;
  std::size_t base;  // offset of this line within the file
};

void skip_spaces(Cursor& c) {
  while (c.pos < c.text.size() && (c.text[c.pos] == ' ' || c.text[c.pos] == '\t')) {
    ++c.pos;
  }
}

void expect(Cursor& c, char ch) {
  skip_spaces(c);
  if (c.pos >= c.text.size() || c.text[c.pos] != ch) {
    throw ParseError(c.base + c.pos, std::string("semantic set file: expected '") +
                                         ch + "'");
  }
  ++c.pos;
}

void expect_word(Cursor& c, std::string_view word) {
  skip_spaces(c);
  if (c.text.compare(c.pos, word.size(), word) != 0) {
    throw ParseError(c.base + c.pos, "semantic set file: expected '" +
                                         std::string(word) + "'");
  }
  c.pos += word.size();
}

int parse_int(Cursor& c) {
  skip_spaces(c);
  int value = 0;
  const char* first = c.text.data() + c.pos;
  const char* last = c.text.data() + c.text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr == first) {
    throw ParseError(c.base + c.pos, "semantic set file: expected an integer");
  }
  c.pos += static_cast<std::size_t>(ptr - first);
  return value;
}

std::vector<int> parse_int_list(Cursor& c) {
  std::vector<int> out;
  out.push_back(parse_int(c));
  skip_spaces(c);
  while (c.pos < c.text.size() && c.text[c.pos] == ',') {
    ++c.pos;
    out.push_back(parse_int(c));
    skip_spaces(c);
  }
  return out;
}

}  // namespace

std::vector<SemanticSets> parse_semantic_sets_file(
    const std::filesystem::path& path, int num_classes) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path.string() + " for reading");
  }
  std::vector<SemanticSets> out;
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    const std::size_t line_base = offset;
    offset += line.size() + 1;
    std::string trimmed = line;
    if (const auto s = trimmed.find_first_not_of(" \t\r"); s == std::string::npos) {
      continue;
    } else if (trimmed[s] == '#') {
      continue;
    }
    if (!trimmed.empty() && trimmed.back() == '\r') {
      trimmed.pop_back();
    }
    Cursor c{trimmed, 0, line_base};
    SemanticSets sets;
    expect_word(c, "target");
    expect(c, '=');
    sets.target = parse_int(c);
    expect(c, ';');
    expect_word(c, "S1");
    expect(c, '=');
    sets.similar = parse_int_list(c);
    expect(c, ';');
    expect_word(c, "S2");
    expect(c, '=');
    sets.dissimilar = parse_int_list(c);
    skip_spaces(c);
    if (c.pos != trimmed.size()) {
      throw ParseError(line_base + c.pos,
                       "semantic set file: trailing characters");
    }
    std::sort(sets.similar.begin(), sets.similar.end());
    std::sort(sets.dissimilar.begin(), sets.dissimilar.end());
    validate_sets(sets, num_classes);
    out.push_back(std::move(sets));
  }
  return out;
}

}  // namespace dlab
