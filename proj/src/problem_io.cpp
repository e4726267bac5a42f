#include "mflq/problem_io.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <vector>

namespace mflq {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

// ---------------------------------------------------------------------------
// a small TOML-subset reader: sections, key = value, numbers, arrays,
// inline tables, comments
// ---------------------------------------------------------------------------

struct Value {
    enum class Kind { Number, Array, Table } kind = Kind::Number;
    double number = 0.0;
    std::vector<Value> array;
    std::map<std::string, Value> table;
};

struct Lexer {
    const std::string& text;
    size_t pos = 0;

    explicit Lexer(const std::string& t) : text(t) {}

    void skip_space() {
        while (pos < text.size()) {
            char c = text[pos];
            if (c == '#') {
                while (pos < text.size() && text[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos;
            } else {
                break;
            }
        }
    }

    bool eof() {
        skip_space();
        return pos >= text.size();
    }

    char peek() {
        skip_space();
        return pos < text.size() ? text[pos] : '\0';
    }

    void expect(char c) {
        if (peek() != c)
            throw ParseError(std::string("expected '") + c + "' at offset " +
                             std::to_string(pos));
        ++pos;
    }

    std::string identifier() {
        skip_space();
        size_t start = pos;
        while (pos < text.size() &&
               (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_'))
            ++pos;
        if (start == pos) throw ParseError("expected identifier at offset " + std::to_string(pos));
        return text.substr(start, pos - start);
    }

    double number() {
        skip_space();
        size_t start = pos;
        while (pos < text.size() &&
               (std::isdigit(static_cast<unsigned char>(text[pos])) || text[pos] == '+' ||
                text[pos] == '-' || text[pos] == '.' || text[pos] == 'e' || text[pos] == 'E' ||
                text[pos] == 'n' || text[pos] == 'a' || text[pos] == 'i' || text[pos] == 'f'))
            ++pos;
        std::string tok = text.substr(start, pos - start);
        try {
            size_t used = 0;
            double v = std::stod(tok, &used);
            if (used != tok.size()) throw ParseError("");
            return v;
        } catch (...) {
            throw ParseError("bad number '" + tok + "' at offset " + std::to_string(start));
        }
    }
};

Value parse_value(Lexer& lex) {
    Value v;
    char c = lex.peek();
    if (c == '[') {
        lex.expect('[');
        v.kind = Value::Kind::Array;
        if (lex.peek() == ']') {
            lex.expect(']');
            return v;
        }
        for (;;) {
            v.array.push_back(parse_value(lex));
            char d = lex.peek();
            if (d == ',') {
                lex.expect(',');
                if (lex.peek() == ']') {  // trailing comma
                    lex.expect(']');
                    return v;
                }
                continue;
            }
            lex.expect(']');
            return v;
        }
    }
    if (c == '{') {
        lex.expect('{');
        v.kind = Value::Kind::Table;
        if (lex.peek() == '}') {
            lex.expect('}');
            return v;
        }
        for (;;) {
            std::string key = lex.identifier();
            lex.expect('=');
            v.table.emplace(key, parse_value(lex));
            char d = lex.peek();
            if (d == ',') {
                lex.expect(',');
                continue;
            }
            lex.expect('}');
            return v;
        }
    }
    v.kind = Value::Kind::Number;
    v.number = lex.number();
    return v;
}

using Section = std::map<std::string, Value>;
using Document = std::map<std::string, Section>;

Document parse_document(const std::string& text) {
    Lexer lex(text);
    Document doc;
    std::string section;
    while (!lex.eof()) {
        if (lex.peek() == '[') {
            lex.expect('[');
            section = lex.identifier();
            lex.expect(']');
            doc[section];
            continue;
        }
        std::string key = lex.identifier();
        lex.expect('=');
        if (section.empty()) throw ParseError("key '" + key + "' outside any section");
        doc[section].emplace(key, parse_value(lex));
    }
    return doc;
}

// ---------------------------------------------------------------------------
// value -> model conversions
// ---------------------------------------------------------------------------

Matrix value_to_matrix(const Value& v, Eigen::Index rows, Eigen::Index cols,
                       const std::string& name) {
    if (v.kind != Value::Kind::Array)
        throw ParseError(name + ": expected a matrix (array of rows)");
    // vectors may be written flat
    bool flat = !v.array.empty() && v.array[0].kind == Value::Kind::Number;
    Matrix m(rows, cols);
    if (flat) {
        if (static_cast<Eigen::Index>(v.array.size()) != rows * cols)
            throw ParseError(name + ": expected " + std::to_string(rows * cols) + " entries");
        for (Eigen::Index i = 0; i < rows * cols; ++i)
            m(i / cols, i % cols) = v.array[static_cast<size_t>(i)].number;
        return m;
    }
    if (static_cast<Eigen::Index>(v.array.size()) != rows)
        throw ParseError(name + ": expected " + std::to_string(rows) + " rows");
    for (Eigen::Index i = 0; i < rows; ++i) {
        const Value& row = v.array[static_cast<size_t>(i)];
        if (row.kind != Value::Kind::Array ||
            static_cast<Eigen::Index>(row.array.size()) != cols)
            throw ParseError(name + ": row " + std::to_string(i) + " needs " +
                             std::to_string(cols) + " entries");
        for (Eigen::Index j = 0; j < cols; ++j) {
            if (row.array[static_cast<size_t>(j)].kind != Value::Kind::Number)
                throw ParseError(name + ": matrix entries must be numbers");
            m(i, j) = row.array[static_cast<size_t>(j)].number;
        }
    }
    return m;
}

bool is_sampled(const Value& v) {
    return v.kind == Value::Kind::Array && !v.array.empty() &&
           v.array[0].kind == Value::Kind::Table;
}

CoeffFn value_to_coeff(const Value& v, Eigen::Index rows, Eigen::Index cols,
                       const std::string& name) {
    if (!is_sampled(v)) return CoeffFn::constant(value_to_matrix(v, rows, cols, name));
    std::vector<double> times;
    std::vector<Matrix> samples;
    for (const Value& entry : v.array) {
        if (entry.kind != Value::Kind::Table || !entry.table.count("t") ||
            !entry.table.count("v"))
            throw ParseError(name + ": samples must be {t = ..., v = ...}");
        times.push_back(entry.table.at("t").number);
        samples.push_back(value_to_matrix(entry.table.at("v"), rows, cols, name));
    }
    try {
        return CoeffFn::sampled(std::move(times), std::move(samples));
    } catch (const ShapeError& e) {
        throw ParseError(name + ": " + e.what());
    }
}

CoeffFn symmetrize_coeff(const CoeffFn& fn) {
    if (fn.is_constant()) return CoeffFn::constant(symmetrized(fn.samples()[0]));
    std::vector<Matrix> samples;
    samples.reserve(fn.samples().size());
    for (const Matrix& s : fn.samples()) samples.push_back(symmetrized(s));
    return CoeffFn::sampled(fn.times(), std::move(samples));
}

const Value* find(const Document& doc, const std::string& section, const std::string& key) {
    auto sit = doc.find(section);
    if (sit == doc.end()) return nullptr;
    auto kit = sit->second.find(key);
    return kit == sit->second.end() ? nullptr : &kit->second;
}

// ---------------------------------------------------------------------------
// emission
// ---------------------------------------------------------------------------

void emit_matrix(std::ostream& os, const Matrix& m) {
    if (m.cols() == 1) {  // vectors flat
        os << "[";
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            os << (i ? ", " : "") << format_double(m(i, 0));
        os << "]";
        return;
    }
    os << "[";
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        os << (i ? ", [" : "[");
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            os << (j ? ", " : "") << format_double(m(i, j));
        os << "]";
    }
    os << "]";
}

void emit_coeff(std::ostream& os, const std::string& key, const CoeffFn& fn) {
    os << key << " = ";
    if (fn.is_constant()) {
        emit_matrix(os, fn.samples()[0]);
    } else {
        os << "[";
        for (size_t i = 0; i < fn.times().size(); ++i) {
            os << (i ? ", {t = " : "{t = ") << format_double(fn.times()[i]) << ", v = ";
            emit_matrix(os, fn.samples()[i]);
            os << "}";
        }
        os << "]";
    }
    os << "\n";
}

}  // namespace

ProblemSpec parse_problem(const std::string& text) {
    Document doc = parse_document(text);
    const Value* n_v = find(doc, "dimensions", "n");
    const Value* m_v = find(doc, "dimensions", "m");
    const Value* t_v = find(doc, "dimensions", "T");
    if (!n_v || !m_v || !t_v)
        throw ParseError("[dimensions] must define n, m and T");
    int n = static_cast<int>(n_v->number);
    int m = static_cast<int>(m_v->number);
    if (n < 1 || m < 1) throw ParseError("dimensions must be positive integers");
    ProblemSpec spec = zero_spec(n, m, t_v->number);

    auto coeff = [&](const char* section, const char* key, Eigen::Index r, Eigen::Index c,
                     CoeffFn& dst, bool symmetric) {
        if (const Value* v = find(doc, section, key)) {
            dst = value_to_coeff(*v, r, c, key);
            if (symmetric) dst = symmetrize_coeff(dst);
        }
    };

    coeff("dynamics", "A", n, n, spec.A, false);
    coeff("dynamics", "A_hat", n, n, spec.A_hat, false);
    coeff("dynamics", "B", n, m, spec.B, false);
    coeff("dynamics", "B_hat", n, m, spec.B_hat, false);
    coeff("dynamics", "C", n, n, spec.C, false);
    coeff("dynamics", "C_hat", n, n, spec.C_hat, false);
    coeff("dynamics", "f", n, 1, spec.f, false);

    if (const Value* v = find(doc, "cost", "G"))
        spec.G = symmetrized(value_to_matrix(*v, n, n, "G"));
    if (const Value* v = find(doc, "cost", "G_hat"))
        spec.G_hat = symmetrized(value_to_matrix(*v, n, n, "G_hat"));
    coeff("cost", "Q", n, n, spec.Q, true);
    coeff("cost", "Q_hat", n, n, spec.Q_hat, true);
    coeff("cost", "S1", n, n, spec.S1, false);
    coeff("cost", "S1_hat", n, n, spec.S1_hat, false);
    coeff("cost", "S2", n, m, spec.S2, false);
    coeff("cost", "S2_hat", n, m, spec.S2_hat, false);
    coeff("cost", "R11", n, n, spec.R11, true);
    coeff("cost", "R11_hat", n, n, spec.R11_hat, true);
    coeff("cost", "R12", n, m, spec.R12, false);
    coeff("cost", "R12_hat", n, m, spec.R12_hat, false);
    coeff("cost", "R22", m, m, spec.R22, true);
    coeff("cost", "R22_hat", m, m, spec.R22_hat, true);

    if (const Value* v = find(doc, "linear", "g"))
        spec.g = value_to_matrix(*v, n, 1, "g").col(0);
    coeff("linear", "q", n, 1, spec.q, false);
    coeff("linear", "rho1", n, 1, spec.rho1, false);
    coeff("linear", "rho2", m, 1, spec.rho2, false);

    if (const Value* v = find(doc, "terminal", "zeta0"))
        spec.terminal.zeta0 = value_to_matrix(*v, n, 1, "zeta0").col(0);
    if (const Value* v = find(doc, "terminal", "zeta1"))
        spec.terminal.zeta1 = value_to_matrix(*v, n, 1, "zeta1").col(0);
    return spec;
}

ProblemSpec load_problem(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open problem file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_problem(buf.str());
}

std::string emit_problem(const ProblemSpec& spec) {
    std::ostringstream os;
    os << "[dimensions]\n";
    os << "n = " << spec.n << "\n";
    os << "m = " << spec.m << "\n";
    os << "T = " << format_double(spec.T) << "\n\n";

    os << "[dynamics]\n";
    emit_coeff(os, "A", spec.A);
    emit_coeff(os, "A_hat", spec.A_hat);
    emit_coeff(os, "B", spec.B);
    emit_coeff(os, "B_hat", spec.B_hat);
    emit_coeff(os, "C", spec.C);
    emit_coeff(os, "C_hat", spec.C_hat);
    emit_coeff(os, "f", spec.f);

    os << "\n[cost]\n";
    os << "G = ";
    emit_matrix(os, spec.G);
    os << "\nG_hat = ";
    emit_matrix(os, spec.G_hat);
    os << "\n";
    emit_coeff(os, "Q", spec.Q);
    emit_coeff(os, "Q_hat", spec.Q_hat);
    emit_coeff(os, "S1", spec.S1);
    emit_coeff(os, "S1_hat", spec.S1_hat);
    emit_coeff(os, "S2", spec.S2);
    emit_coeff(os, "S2_hat", spec.S2_hat);
    emit_coeff(os, "R11", spec.R11);
    emit_coeff(os, "R11_hat", spec.R11_hat);
    emit_coeff(os, "R12", spec.R12);
    emit_coeff(os, "R12_hat", spec.R12_hat);
    emit_coeff(os, "R22", spec.R22);
    emit_coeff(os, "R22_hat", spec.R22_hat);

    os << "\n[linear]\n";
    os << "g = ";
    emit_matrix(os, Matrix(spec.g));
    os << "\n";
    emit_coeff(os, "q", spec.q);
    emit_coeff(os, "rho1", spec.rho1);
    emit_coeff(os, "rho2", spec.rho2);

    os << "\n[terminal]\n";
    os << "zeta0 = ";
    emit_matrix(os, Matrix(spec.terminal.zeta0));
    os << "\nzeta1 = ";
    emit_matrix(os, Matrix(spec.terminal.zeta1));
    os << "\n";
    return os.str();
}

void write_matrix_path_csv(std::ostream& os, const MatrixPath& path,
                           const std::string& prefix) {
    os << "t";
    for (Eigen::Index i = 0; i < path.rows(); ++i)
        for (Eigen::Index j = 0; j < path.cols(); ++j)
            os << "," << prefix << i << j;
    os << "\n";
    const Grid& grid = path.grid();
    for (int k = 0; k < path.nodes(); ++k) {
        os << format_double(grid.time(k));
        const Matrix& m = path.at(k);
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) os << "," << format_double(m(i, j));
        os << "\n";
    }
}

}  // namespace mflq
