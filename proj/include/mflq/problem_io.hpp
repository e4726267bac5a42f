#pragma once

#include "mflq/model.hpp"

#include <iosfwd>
#include <stdexcept>
#include <string>

namespace mflq {

class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Problem files are a TOML-style key-value tree with sections
// [dimensions], [dynamics], [cost], [linear], [terminal].  Matrices are
// row-major nested arrays, vectors flat arrays, and time-sampled
// coefficients arrays of inline tables {t = ..., v = ...}.  Keys other
// than the dimensions default to zero.  Symmetric weights are projected to
// their symmetric part after parsing.
ProblemSpec parse_problem(const std::string& text);
ProblemSpec load_problem(const std::string& path);

// Inverse of parse_problem up to bitwise-identical matrix entries
// (numbers are printed with 17 significant digits).
std::string emit_problem(const ProblemSpec& spec);

// Shortest-width deterministic formatting used by every text artifact.
std::string format_double(double v);

// CSV with columns t, then row-major matrix entries, 17 significant digits.
void write_matrix_path_csv(std::ostream& os, const MatrixPath& path,
                           const std::string& prefix);

}  // namespace mflq
