#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gexpect/errors.hpp"

namespace gexpect {

class parse_error : public input_error {
public:
    parse_error(const std::string& msg, std::size_t offset)
        : input_error(msg + " (at offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

enum class ExprKind {
    number,
    variable,
    add,
    sub,
    mul,
    div,
    neg,
    pow,
    call_abs,
    call_min,
    call_max,
    call_exp,
    call_sqrt
};

/// AST node. Variables address cylinder coordinates: block i (1-based) is the
/// i-th time's R^d value, component j selects within it ("x2_1"). For d = 1
/// the component is implicit ("x2").
struct Expr {
    ExprKind kind = ExprKind::number;
    double number = 0.0;
    std::size_t block = 0;
    std::size_t comp = 1;
    long exponent = 0;
    std::vector<Expr> kids;
};

/// A parsed payoff: the source text, its AST, the variable layout it was
/// parsed against, and growth metadata. `flagged` marks expressions (exp,
/// sqrt) outside the polynomial-growth class the engine is calibrated for;
/// the engine only accepts those with an explicit override.
struct FunctionalSpec {
    std::string source;
    Expr root;
    std::size_t arity = 1;
    std::size_t dim = 1;
    int growth_degree = 0;
    bool flagged = false;
    double division_guard = 1e-12;
};

namespace detail {

class ExprParser {
public:
    ExprParser(std::string_view src, std::size_t arity, std::size_t dim)
        : src_(src), arity_(arity), dim_(dim) {}

    Expr parse() {
        Expr e = parse_sum();
        skip_ws();
        if (pos_ != src_.size()) throw parse_error("unexpected trailing input", pos_);
        return e;
    }

private:
    void skip_ws() {
        while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t' ||
                                      src_[pos_] == '\n' || src_[pos_] == '\r'))
            ++pos_;
    }

    bool eat(char c) {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    char peek() {
        skip_ws();
        return pos_ < src_.size() ? src_[pos_] : '\0';
    }

    Expr parse_sum() {
        Expr left = parse_term();
        while (true) {
            if (eat('+')) left = binary(ExprKind::add, std::move(left), parse_term());
            else if (eat('-')) left = binary(ExprKind::sub, std::move(left), parse_term());
            else return left;
        }
    }

    Expr parse_term() {
        Expr left = parse_factor();
        while (true) {
            if (eat('*')) left = binary(ExprKind::mul, std::move(left), parse_factor());
            else if (eat('/')) left = binary(ExprKind::div, std::move(left), parse_factor());
            else return left;
        }
    }

    Expr parse_factor() {
        if (eat('-')) {
            Expr e;
            e.kind = ExprKind::neg;
            e.kids.push_back(parse_factor());
            return e;
        }
        return parse_power();
    }

    Expr parse_power() {
        Expr base = parse_atom();
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == '^') {
            ++pos_;
            skip_ws();
            const std::size_t at = pos_;
            if (pos_ < src_.size() && (src_[pos_] == '-' || src_[pos_] == '+'))
                throw parse_error("exponent must be a nonnegative integer", at);
            long exp_val = 0;
            auto [ptr, ec] =
                std::from_chars(src_.data() + pos_, src_.data() + src_.size(), exp_val);
            if (ec != std::errc() || ptr == src_.data() + pos_)
                throw parse_error("exponent must be a nonnegative integer", at);
            pos_ = static_cast<std::size_t>(ptr - src_.data());
            if (pos_ < src_.size() && src_[pos_] == '.')
                throw parse_error("exponent must be an integer", pos_);
            Expr e;
            e.kind = ExprKind::pow;
            e.exponent = exp_val;
            e.kids.push_back(std::move(base));
            skip_ws();
            if (pos_ < src_.size() && src_[pos_] == '^')
                throw parse_error("chained '^' needs parentheses", pos_);
            return e;
        }
        return base;
    }

    Expr parse_atom() {
        skip_ws();
        if (pos_ >= src_.size()) throw parse_error("unexpected end of input", pos_);
        const char c = src_[pos_];
        if (c == '(') {
            ++pos_;
            Expr e = parse_sum();
            if (!eat(')')) throw parse_error("expected ')'", pos_);
            return e;
        }
        if ((c >= '0' && c <= '9') || c == '.') return parse_number();
        if (is_ident_start(c)) return parse_ident();
        throw parse_error(std::string("unexpected character '") + c + "'", pos_);
    }

    static bool is_ident_start(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
    static bool is_digit(char c) { return c >= '0' && c <= '9'; }

    Expr parse_number() {
        const std::size_t at = pos_;
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(src_.data() + pos_, src_.data() + src_.size(), v);
        if (ec != std::errc() || ptr == src_.data() + pos_)
            throw parse_error("malformed number", at);
        pos_ = static_cast<std::size_t>(ptr - src_.data());
        Expr e;
        e.kind = ExprKind::number;
        e.number = v;
        return e;
    }

    Expr parse_ident() {
        const std::size_t at = pos_;
        std::size_t end = pos_;
        while (end < src_.size() &&
               (is_ident_start(src_[end]) || is_digit(src_[end]) || src_[end] == '_'))
            ++end;
        const std::string_view name = src_.substr(pos_, end - pos_);
        pos_ = end;

        if (name == "abs" || name == "exp" || name == "sqrt") return parse_call(name, 1, at);
        if (name == "min" || name == "max") return parse_call(name, 2, at);
        if (name.size() >= 2 && name[0] == 'x' && is_digit(name[1])) return variable(name, at);
        throw parse_error("unknown identifier '" + std::string(name) + "'", at);
    }

    Expr parse_call(std::string_view name, std::size_t nargs, std::size_t at) {
        if (!eat('(')) throw parse_error("expected '(' after '" + std::string(name) + "'", pos_);
        Expr e;
        e.kind = name == "abs"   ? ExprKind::call_abs
                 : name == "exp" ? ExprKind::call_exp
                 : name == "sqrt" ? ExprKind::call_sqrt
                 : name == "min" ? ExprKind::call_min
                                 : ExprKind::call_max;
        e.kids.push_back(parse_sum());
        for (std::size_t k = 1; k < nargs; ++k) {
            if (!eat(',')) throw parse_error("'" + std::string(name) + "' takes " +
                                                 std::to_string(nargs) + " arguments",
                                             pos_);
            e.kids.push_back(parse_sum());
        }
        if (!eat(')')) throw parse_error("expected ')'", pos_);
        (void)at;
        return e;
    }

    Expr variable(std::string_view name, std::size_t at) {
        std::size_t us = name.find('_');
        std::string_view block_part = name.substr(1, us == std::string_view::npos
                                                         ? std::string_view::npos
                                                         : us - 1);
        std::size_t block = 0;
        {
            auto [ptr, ec] = std::from_chars(block_part.data(),
                                             block_part.data() + block_part.size(), block);
            if (ec != std::errc() || ptr != block_part.data() + block_part.size())
                throw parse_error("malformed variable '" + std::string(name) + "'", at);
        }
        std::size_t comp = 1;
        if (us != std::string_view::npos) {
            std::string_view comp_part = name.substr(us + 1);
            auto [ptr, ec] =
                std::from_chars(comp_part.data(), comp_part.data() + comp_part.size(), comp);
            if (ec != std::errc() || ptr != comp_part.data() + comp_part.size())
                throw parse_error("malformed component in '" + std::string(name) + "'", at);
        }
        if (block == 0)
            throw parse_error("unknown variable '" + std::string(name) +
                                  "' (indices start at 1)",
                              at);
        if (block > arity_)
            throw parse_error("variable x" + std::to_string(block) + " exceeds arity " +
                                  std::to_string(arity_),
                              at);
        if (us == std::string_view::npos && dim_ > 1)
            throw parse_error("variable '" + std::string(name) +
                                  "' needs a component suffix when d > 1",
                              at);
        if (comp == 0 || comp > dim_)
            throw parse_error("component " + std::to_string(comp) + " out of range for d = " +
                                  std::to_string(dim_),
                              at);
        Expr e;
        e.kind = ExprKind::variable;
        e.block = block;
        e.comp = comp;
        return e;
    }

    Expr binary(ExprKind k, Expr l, Expr r) {
        Expr e;
        e.kind = k;
        e.kids.push_back(std::move(l));
        e.kids.push_back(std::move(r));
        return e;
    }

    std::string_view src_;
    std::size_t arity_;
    std::size_t dim_;
    std::size_t pos_ = 0;
};

struct GrowthScan {
    int degree = 0;
    bool flagged = false;
};

inline GrowthScan scan_growth(const Expr& e) {
    auto deg = [](const GrowthScan& g) { return g.degree; };
    switch (e.kind) {
    case ExprKind::number: return {0, false};
    case ExprKind::variable: return {1, false};
    case ExprKind::add:
    case ExprKind::sub:
    case ExprKind::call_min:
    case ExprKind::call_max: {
        GrowthScan a = scan_growth(e.kids[0]), b = scan_growth(e.kids[1]);
        return {std::max(deg(a), deg(b)), a.flagged || b.flagged};
    }
    case ExprKind::mul: {
        GrowthScan a = scan_growth(e.kids[0]), b = scan_growth(e.kids[1]);
        return {a.degree + b.degree, a.flagged || b.flagged};
    }
    case ExprKind::div: {
        GrowthScan a = scan_growth(e.kids[0]), b = scan_growth(e.kids[1]);
        return {a.degree, a.flagged || b.flagged};
    }
    case ExprKind::neg:
    case ExprKind::call_abs: return scan_growth(e.kids[0]);
    case ExprKind::pow: {
        GrowthScan a = scan_growth(e.kids[0]);
        return {a.degree * static_cast<int>(e.exponent), a.flagged};
    }
    case ExprKind::call_sqrt: {
        GrowthScan a = scan_growth(e.kids[0]);
        return {(a.degree + 1) / 2, true};
    }
    case ExprKind::call_exp: {
        GrowthScan a = scan_growth(e.kids[0]);
        (void)a;
        return {0, true};
    }
    }
    throw evaluation_error("scan_growth: unreachable");
}

inline double eval_node(const Expr& e, std::span<const double> point, std::size_t dim,
                        double guard) {
    switch (e.kind) {
    case ExprKind::number: return e.number;
    case ExprKind::variable: return point[(e.block - 1) * dim + (e.comp - 1)];
    case ExprKind::add:
        return eval_node(e.kids[0], point, dim, guard) + eval_node(e.kids[1], point, dim, guard);
    case ExprKind::sub:
        return eval_node(e.kids[0], point, dim, guard) - eval_node(e.kids[1], point, dim, guard);
    case ExprKind::mul:
        return eval_node(e.kids[0], point, dim, guard) * eval_node(e.kids[1], point, dim, guard);
    case ExprKind::div: {
        const double den = eval_node(e.kids[1], point, dim, guard);
        if (std::fabs(den) < guard)
            throw evaluation_error("division by near-zero denominator (guard " +
                                   std::to_string(guard) + ")");
        return eval_node(e.kids[0], point, dim, guard) / den;
    }
    case ExprKind::neg: return -eval_node(e.kids[0], point, dim, guard);
    case ExprKind::pow: {
        double base = eval_node(e.kids[0], point, dim, guard);
        // exponentiation by squaring: deterministic across libms, exact for x^0 = 1
        double result = 1.0;
        double b = base;
        long n = e.exponent;
        while (n > 0) {
            if (n & 1) result *= b;
            b *= b;
            n >>= 1;
        }
        return result;
    }
    case ExprKind::call_abs: return std::fabs(eval_node(e.kids[0], point, dim, guard));
    case ExprKind::call_min:
        return std::min(eval_node(e.kids[0], point, dim, guard),
                        eval_node(e.kids[1], point, dim, guard));
    case ExprKind::call_max:
        return std::max(eval_node(e.kids[0], point, dim, guard),
                        eval_node(e.kids[1], point, dim, guard));
    case ExprKind::call_exp: return std::exp(eval_node(e.kids[0], point, dim, guard));
    case ExprKind::call_sqrt: {
        const double v = eval_node(e.kids[0], point, dim, guard);
        if (v < 0.0) throw evaluation_error("sqrt of negative value");
        return std::sqrt(v);
    }
    }
    throw evaluation_error("eval_node: unreachable");
}

inline int precedence(ExprKind k) {
    switch (k) {
    case ExprKind::add:
    case ExprKind::sub: return 1;
    case ExprKind::mul:
    case ExprKind::div: return 2;
    case ExprKind::neg: return 3;
    case ExprKind::pow: return 4;
    default: return 5;
    }
}

inline std::string format_number(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) return "0";
    return std::string(buf, ptr);
}

inline void format_node(const Expr& e, std::string& out, bool with_component) {
    auto child = [&](const Expr& kid, bool needs_parens) {
        if (needs_parens) {
            out.push_back('(');
            format_node(kid, out, with_component);
            out.push_back(')');
        } else {
            format_node(kid, out, with_component);
        }
    };
    const int p = precedence(e.kind);
    switch (e.kind) {
    case ExprKind::number: out += format_number(e.number); return;
    case ExprKind::variable:
        out += "x" + std::to_string(e.block);
        // d = 1 sources stay bare; d > 1 always carries the suffix so the
        // canonical text reparses under the same layout
        if (with_component) out += "_" + std::to_string(e.comp);
        return;
    case ExprKind::add:
    case ExprKind::sub:
    case ExprKind::mul:
    case ExprKind::div: {
        const char* op = e.kind == ExprKind::add   ? " + "
                         : e.kind == ExprKind::sub ? " - "
                         : e.kind == ExprKind::mul ? "*"
                                                   : "/";
        child(e.kids[0], precedence(e.kids[0].kind) < p);
        out += op;
        // right side: parenthesize at equal precedence to preserve the AST
        child(e.kids[1], precedence(e.kids[1].kind) <= p);
        return;
    }
    case ExprKind::neg:
        out.push_back('-');
        child(e.kids[0], precedence(e.kids[0].kind) < p);
        return;
    case ExprKind::pow:
        child(e.kids[0], precedence(e.kids[0].kind) <= 4);
        out += "^" + std::to_string(e.exponent);
        return;
    case ExprKind::call_abs:
    case ExprKind::call_exp:
    case ExprKind::call_sqrt: {
        out += e.kind == ExprKind::call_abs ? "abs(" : e.kind == ExprKind::call_exp ? "exp("
                                                                                    : "sqrt(";
        format_node(e.kids[0], out, with_component);
        out.push_back(')');
        return;
    }
    case ExprKind::call_min:
    case ExprKind::call_max:
        out += e.kind == ExprKind::call_min ? "min(" : "max(";
        format_node(e.kids[0], out, with_component);
        out += ", ";
        format_node(e.kids[1], out, with_component);
        out.push_back(')');
        return;
    }
}

} // namespace detail

/// Parses a payoff over n coordinate blocks of dimension d. Error offsets are
/// byte positions into `text`.
inline FunctionalSpec parse_functional(const std::string& text, std::size_t arity,
                                       std::size_t dim = 1) {
    if (text.empty()) throw parse_error("empty expression", 0);
    if (arity == 0 || dim == 0)
        throw input_error("parse_functional: arity and dimension must be positive");
    FunctionalSpec f;
    f.source = text;
    f.arity = arity;
    f.dim = dim;
    f.root = detail::ExprParser(text, arity, dim).parse();
    const auto g = detail::scan_growth(f.root);
    f.growth_degree = g.degree;
    f.flagged = g.flagged;
    return f;
}

/// point layout: ((block 1, components 1..d), (block 2, ...), ...).
inline double evaluate(const FunctionalSpec& f, std::span<const double> point) {
    if (point.size() != f.arity * f.dim)
        throw input_error("evaluate: point has " + std::to_string(point.size()) +
                          " coordinates, expected " + std::to_string(f.arity * f.dim));
    for (double x : point)
        if (!std::isfinite(x)) throw input_error("evaluate: non-finite input coordinate");
    const double v = detail::eval_node(f.root, point, f.dim, f.division_guard);
    if (!std::isfinite(v)) throw evaluation_error("expression evaluated to a non-finite value");
    return v;
}

inline std::string format(const Expr& e, bool with_component = false) {
    std::string out;
    detail::format_node(e, out, with_component);
    return out;
}

inline std::string format(const FunctionalSpec& f) { return format(f.root, f.dim > 1); }

/// Canonical form: reparse of the canonical text. format(normalize(f)) is a
/// fixed point.
inline FunctionalSpec normalize(const FunctionalSpec& f) {
    FunctionalSpec g = parse_functional(format(f), f.arity, f.dim);
    g.division_guard = f.division_guard;
    return g;
}

inline bool same_ast(const Expr& a, const Expr& b) {
    if (a.kind != b.kind || a.kids.size() != b.kids.size()) return false;
    switch (a.kind) {
    case ExprKind::number:
        if (a.number != b.number) return false;
        break;
    case ExprKind::variable:
        if (a.block != b.block || a.comp != b.comp) return false;
        break;
    case ExprKind::pow:
        if (a.exponent != b.exponent) return false;
        break;
    default: break;
    }
    for (std::size_t i = 0; i < a.kids.size(); ++i)
        if (!same_ast(a.kids[i], b.kids[i])) return false;
    return true;
}

struct GrowthReport {
    std::vector<double> radii;
    std::vector<double> lipschitz_ratio; // max |f(x)-f(y)| / |x-y| seen at each radius
    std::vector<double> slopes;          // log-log slopes between consecutive radii
    double fitted_degree = 0.0;          // k in C(1+|x|^k+|y|^k)|x-y|
    double slope_variance = 0.0;         // across the top-3 slopes
    double fitted_constant = 0.0;        // smallest C at the rounded k
    bool nonpolynomial = false;
    std::string note;
    std::size_t skipped = 0; // sample pairs rejected by evaluation guards
};

/// Samples difference quotients at growing radii and fits the growth exponent
/// from the log-log slope of the worst Lipschitz ratio. Expressions containing
/// exp (or a visibly diverging slope trend) are flagged as outside the
/// polynomial class.
inline GrowthReport growth_diagnostic(const FunctionalSpec& f, std::size_t samples = 200,
                                      std::vector<double> radii = {1, 2, 4, 8, 16, 32},
                                      std::uint64_t seed = 12345) {
    if (samples < 100) throw input_error("growth_diagnostic: need at least 100 samples");
    if (radii.size() < 3) throw input_error("growth_diagnostic: need at least 3 radii");
    for (std::size_t i = 1; i < radii.size(); ++i)
        if (!(radii[i] > radii[i - 1]) || !(radii[0] > 0.0))
            throw input_error("growth_diagnostic: radii must be positive and increasing");

    const std::size_t m = f.arity * f.dim;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);

    GrowthReport rep;
    rep.radii = radii;

    struct PairSample {
        std::vector<double> x, y;
        double df, dist;
    };
    std::vector<PairSample> kept;
    kept.reserve(radii.size() * samples);

    for (double r : radii) {
        double worst = 0.0;
        for (std::size_t s = 0; s < samples; ++s) {
            std::vector<double> x(m), y(m);
            for (auto& v : x) v = r * unit(rng);
            const bool local = (s % 2 == 0);
            for (std::size_t k = 0; k < m; ++k)
                y[k] = local ? x[k] + 1e-3 * r * unit(rng) : r * unit(rng);
            double dist = 0.0;
            for (std::size_t k = 0; k < m; ++k) dist += (x[k] - y[k]) * (x[k] - y[k]);
            dist = std::sqrt(dist);
            if (dist < 1e-14) continue;
            double fx, fy;
            try {
                fx = evaluate(f, x);
                fy = evaluate(f, y);
            } catch (const evaluation_error&) {
                ++rep.skipped;
                continue;
            }
            const double ratio = std::fabs(fx - fy) / dist;
            worst = std::max(worst, ratio);
            kept.push_back({std::move(x), std::move(y), std::fabs(fx - fy), dist});
        }
        rep.lipschitz_ratio.push_back(worst);
    }

    for (std::size_t i = 1; i < radii.size(); ++i) {
        const double l0 = rep.lipschitz_ratio[i - 1], l1 = rep.lipschitz_ratio[i];
        if (l0 < 1e-300 || l1 < 1e-300) {
            rep.slopes.push_back(0.0);
            continue;
        }
        rep.slopes.push_back((std::log(l1) - std::log(l0)) /
                             (std::log(radii[i]) - std::log(radii[i - 1])));
    }

    const std::size_t ns = rep.slopes.size();
    const std::size_t top = std::min<std::size_t>(3, ns);
    double mean = 0.0;
    for (std::size_t i = ns - top; i < ns; ++i) mean += rep.slopes[i];
    mean /= static_cast<double>(top);
    double var = 0.0;
    for (std::size_t i = ns - top; i < ns; ++i)
        var += (rep.slopes[i] - mean) * (rep.slopes[i] - mean);
    var /= static_cast<double>(top);
    rep.fitted_degree = std::max(0.0, mean);
    rep.slope_variance = var;

    const double k = std::max(0.0, std::round(rep.fitted_degree));
    double c = 0.0;
    for (const auto& p : kept) {
        double nx = 0.0, ny = 0.0;
        for (double v : p.x) nx += v * v;
        for (double v : p.y) ny += v * v;
        nx = std::sqrt(nx);
        ny = std::sqrt(ny);
        const double denom = (1.0 + std::pow(nx, k) + std::pow(ny, k)) * p.dist;
        if (denom > 0.0) c = std::max(c, p.df / denom);
    }
    rep.fitted_constant = c;

    if (f.flagged) {
        rep.nonpolynomial = true;
        rep.note = "expression contains exp/sqrt, outside the polynomial growth class";
    } else if (ns >= 3 && rep.slopes[ns - 1] - rep.slopes[ns - 3] > 1.0) {
        rep.nonpolynomial = true;
        rep.note = "Lipschitz slope keeps increasing across radii";
    }
    if (rep.skipped > radii.size() * samples / 2)
        rep.note += (rep.note.empty() ? "" : "; ") + std::string("most samples hit guards");
    return rep;
}

} // namespace gexpect
