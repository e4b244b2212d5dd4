#include "countgam/formula.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

namespace countgam {

FormulaError::FormulaError(std::string message, std::size_t offset)
    : std::runtime_error(message + " (at byte offset " + std::to_string(offset) + ")"),
      offset_(offset) {}

namespace {

constexpr int kDefaultK1d = 10;
constexpr int kDefaultK2dAxis = 5;

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  ModelSpec parse() {
    ModelSpec spec;
    spec.response = expect_ident("response name");
    skip_ws();
    expect('~');
    parse_term(spec);
    skip_ws();
    while (!at_end()) {
      expect('+');
      parse_term(spec);
      skip_ws();
    }
    validate(spec);
    return spec;
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;

  bool at_end() {
    skip_ws();
    return pos_ >= text_.size();
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  char peek() {
    skip_ws();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }

  void expect(char c) {
    skip_ws();
    if (pos_ >= text_.size() || text_[pos_] != c)
      throw FormulaError(std::string("expected '") + c + "'", pos_);
    ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  static bool ident_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
  }
  static bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
  }

  std::string expect_ident(const char* what) {
    skip_ws();
    if (pos_ >= text_.size() || !ident_start(text_[pos_]))
      throw FormulaError(std::string("expected ") + what, pos_);
    std::size_t start = pos_;
    while (pos_ < text_.size() && ident_char(text_[pos_])) ++pos_;
    return std::string(text_.substr(start, pos_ - start));
  }

  int expect_int(const char* what) {
    skip_ws();
    if (pos_ >= text_.size() || !std::isdigit(static_cast<unsigned char>(text_[pos_])))
      throw FormulaError(std::string("expected ") + what, pos_);
    long value = 0;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
      value = value * 10 + (text_[pos_] - '0');
      if (value > 1'000'000) throw FormulaError("integer too large", pos_);
      ++pos_;
    }
    return static_cast<int>(value);
  }

  std::vector<int> parse_int_list() {
    expect('(');
    std::vector<int> values;
    values.push_back(expect_int("integer"));
    while (accept(',')) values.push_back(expect_int("integer"));
    expect(')');
    return values;
  }

  void parse_term(ModelSpec& spec) {
    skip_ws();
    std::size_t term_start = pos_;
    std::string name = expect_ident("term");
    if (name == "s" && peek() == '(') {
      spec.smooth_terms.push_back(parse_s(term_start));
    } else if (name == "te" && peek() == '(') {
      spec.smooth_terms.push_back(parse_te(term_start));
    } else {
      spec.parametric_terms.push_back(std::move(name));
    }
  }

  SmoothTerm parse_s(std::size_t term_start) {
    expect('(');
    SmoothTerm term;
    term.kind = SmoothKind::S;
    term.variables.push_back(expect_ident("variable name"));
    term.d_groups = {1};
    int k = kDefaultK1d;
    if (accept(',')) {
      std::size_t clause_at = pos_;
      std::string clause = expect_ident("clause");
      if (clause != "k") throw FormulaError("unknown clause '" + clause + "' in s()", clause_at);
      expect('=');
      k = expect_int("basis dimension");
      if (k < 3) throw FormulaError("basis dimension must be >= 3 for a 1-D smooth", clause_at);
    }
    term.basis_dims = {k};
    expect(')');
    (void)term_start;
    return term;
  }

  SmoothTerm parse_te(std::size_t term_start) {
    expect('(');
    SmoothTerm term;
    term.kind = SmoothKind::TE;
    term.variables.push_back(expect_ident("variable name"));
    bool have_d = false;
    bool have_k = false;
    std::size_t d_at = 0, k_at = 0;
    std::vector<int> k_list;
    while (accept(',')) {
      std::size_t clause_at = pos_;
      std::string word = expect_ident("variable or clause");
      if (peek() == '=') {
        ++pos_;  // consume '='
        skip_ws();
        std::string fn = expect_ident("clause function");
        if (fn != "c") throw FormulaError("expected c(...) after '" + word + "='", clause_at);
        if (word == "d") {
          if (have_d) throw FormulaError("duplicate d= clause", clause_at);
          if (have_k) throw FormulaError("d= clause must precede k=", clause_at);
          term.d_groups = parse_int_list();
          have_d = true;
          d_at = clause_at;
        } else if (word == "k") {
          if (have_k) throw FormulaError("duplicate k= clause", clause_at);
          k_list = parse_int_list();
          have_k = true;
          k_at = clause_at;
        } else {
          throw FormulaError("unknown clause '" + word + "' in te()", clause_at);
        }
      } else {
        if (have_d || have_k)
          throw FormulaError("variable '" + word + "' after clause list", clause_at);
        term.variables.push_back(std::move(word));
      }
    }
    expect(')');
    (void)term_start;

    const std::size_t nvars = term.variables.size();
    if (!have_d) term.d_groups.assign(nvars, 1);
    std::size_t d_sum = 0;
    for (int d : term.d_groups) {
      if (d < 1 || d > 2)
        throw FormulaError("anisotropy group size must be 1 or 2", have_d ? d_at : term_start);
      d_sum += static_cast<std::size_t>(d);
    }
    if (d_sum != nvars)
      throw FormulaError("d= entries sum to " + std::to_string(d_sum) + " but te() has " +
                             std::to_string(nvars) + " variables",
                         have_d ? d_at : term_start);
    if (have_k) {
      if (k_list.size() != term.d_groups.size())
        throw FormulaError("k= must list one dimension per anisotropy group", k_at);
      for (std::size_t g = 0; g < k_list.size(); ++g) {
        int min_k = term.d_groups[g] == 1 ? 3 : 4;
        if (k_list[g] < min_k)
          throw FormulaError("basis dimension must be >= " + std::to_string(min_k) +
                                 (term.d_groups[g] == 2 ? " per axis for a 2-D group" : ""),
                             k_at);
      }
      term.basis_dims = std::move(k_list);
    } else {
      for (int d : term.d_groups)
        term.basis_dims.push_back(d == 1 ? kDefaultK1d : kDefaultK2dAxis);
    }
    return term;
  }

  void validate(const ModelSpec& spec) {
    if (spec.smooth_terms.empty() && spec.parametric_terms.empty())
      throw FormulaError("empty term list", text_.size());
    // Duplicate smooth terms over the same variable set are rejected.
    std::set<std::vector<std::string>> seen;
    for (const auto& term : spec.smooth_terms) {
      auto vars = term.variables;
      std::sort(vars.begin(), vars.end());
      if (std::adjacent_find(vars.begin(), vars.end()) != vars.end())
        throw FormulaError("variable repeated within one smooth term", 0);
      if (!seen.insert(vars).second)
        throw FormulaError("two smooth terms over the same variable set", 0);
    }
  }
};

bool default_dims(const SmoothTerm& term) {
  for (std::size_t g = 0; g < term.d_groups.size(); ++g) {
    int def = term.d_groups[g] == 1 ? kDefaultK1d : kDefaultK2dAxis;
    if (term.basis_dims[g] != def) return false;
  }
  return true;
}

void format_int_list(std::ostringstream& out, const std::vector<int>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out << ',';
    out << values[i];
  }
}

}  // namespace

ModelSpec parse_formula(std::string_view text) {
  for (char c : text)
    if (static_cast<unsigned char>(c) > 0x7f)
      throw FormulaError("formula must be ASCII", static_cast<std::size_t>(&c - text.data()));
  return Parser(text).parse();
}

std::string format_spec(const ModelSpec& spec) {
  std::ostringstream out;
  out << spec.response << " ~ ";
  bool first = true;
  for (const auto& name : spec.parametric_terms) {
    if (!first) out << " + ";
    out << name;
    first = false;
  }
  for (const auto& term : spec.smooth_terms) {
    if (!first) out << " + ";
    first = false;
    if (term.kind == SmoothKind::S) {
      out << "s(" << term.variables.front();
      if (term.basis_dims.front() != kDefaultK1d) out << ",k=" << term.basis_dims.front();
      out << ')';
    } else {
      out << "te(";
      for (std::size_t i = 0; i < term.variables.size(); ++i) {
        if (i) out << ',';
        out << term.variables[i];
      }
      out << ",d=c(";
      format_int_list(out, term.d_groups);
      out << ')';
      if (!default_dims(term)) {
        out << ",k=c(";
        format_int_list(out, term.basis_dims);
        out << ')';
      }
      out << ')';
    }
  }
  return out.str();
}

}  // namespace countgam
