#include "mvmr/summary_data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "mvmr/errors.hpp"

namespace mvmr {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

bool parse_double(const std::string& tok, double& out) {
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && std::isfinite(out);
}

double number_at(const std::string& tok, const std::filesystem::path& file, std::size_t line_no) {
    double v = 0.0;
    if (!parse_double(tok, v)) {
        throw InputError("parse error: " + file.string() + ":" + std::to_string(line_no) +
                         ": cannot parse '" + tok + "' as a number");
    }
    return v;
}

struct TextTable {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;
};

TextTable read_text_table(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw InputError("cannot open file: " + file.string());
    TextTable t;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto fields = split_fields(line);
        if (fields.empty() || fields.front().starts_with('#')) continue;
        t.rows.push_back(std::move(fields));
        t.line_numbers.push_back(line_no);
    }
    if (t.rows.empty()) throw InputError("empty file: " + file.string());
    return t;
}

std::string upper(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
    return s;
}

std::string join_limited(const std::vector<std::string>& items, std::size_t limit = 20) {
    std::string out;
    for (std::size_t i = 0; i < items.size() && i < limit; ++i) {
        if (i) out += ", ";
        out += items[i];
    }
    if (items.size() > limit) out += ", ... (" + std::to_string(items.size()) + " total)";
    return out;
}

// Square numeric matrix with an optional header row of labels.
struct LabelledMatrix {
    std::vector<std::string> labels;  // empty when the file has no header
    MatrixXd values;
};

LabelledMatrix read_square_matrix(const std::filesystem::path& file) {
    TextTable t = read_text_table(file);
    LabelledMatrix out;
    std::size_t first = 0;
    double probe = 0.0;
    if (!parse_double(t.rows[0][0], probe)) {
        out.labels = t.rows[0];
        first = 1;
    }
    const std::size_t n = t.rows.size() - first;
    for (std::size_t r = first; r < t.rows.size(); ++r) {
        if (t.rows[r].size() != n) {
            throw InputError("dimension error: " + file.string() + " is not square (" +
                             std::to_string(n) + " rows, line " +
                             std::to_string(t.line_numbers[r]) + " has " +
                             std::to_string(t.rows[r].size()) + " columns)");
        }
    }
    if (!out.labels.empty() && out.labels.size() != n) {
        throw InputError("dimension error: " + file.string() + " header has " +
                         std::to_string(out.labels.size()) + " labels for " + std::to_string(n) +
                         " rows");
    }
    out.values.resize(static_cast<Index>(n), static_cast<Index>(n));
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
            out.values(static_cast<Index>(r), static_cast<Index>(c)) =
                number_at(t.rows[r + first][c], file, t.line_numbers[r + first]);
        }
    }
    return out;
}

void check_correlation(const MatrixXd& m, const std::string& what) {
    for (Index i = 0; i < m.rows(); ++i) {
        if (std::abs(m(i, i) - 1.0) > 1e-6) {
            throw InputError(what + " must have unit diagonal (entry " + std::to_string(i + 1) +
                             " is " + std::to_string(m(i, i)) + ")");
        }
        for (Index j = 0; j < m.cols(); ++j) {
            if (std::abs(m(i, j) - m(j, i)) > 1e-6) throw InputError(what + " is not symmetric");
            if (std::abs(m(i, j)) > 1.0 + 1e-9) throw InputError(what + " has entries outside [-1, 1]");
        }
    }
}

MatrixXd reorder_by_labels(const LabelledMatrix& m, const std::vector<std::string>& wanted,
                           const std::filesystem::path& file) {
    if (m.labels.empty()) {
        if (m.values.rows() != static_cast<Index>(wanted.size())) {
            throw InputError("dimension error: " + file.string() + " is " +
                             std::to_string(m.values.rows()) + "x" + std::to_string(m.values.rows()) +
                             ", expected " + std::to_string(wanted.size()));
        }
        return m.values;
    }
    std::unordered_map<std::string, Index> pos;
    for (std::size_t i = 0; i < m.labels.size(); ++i) {
        if (!pos.emplace(m.labels[i], static_cast<Index>(i)).second) {
            throw InputError("duplicate label '" + m.labels[i] + "' in " + file.string());
        }
    }
    std::vector<std::string> missing;
    std::unordered_set<std::string> wanted_set(wanted.begin(), wanted.end());
    for (const auto& w : wanted) {
        if (!pos.count(w)) missing.push_back(w);
    }
    for (const auto& l : m.labels) {
        if (!wanted_set.count(l)) missing.push_back(l);
    }
    if (!missing.empty()) {
        throw InputError("variant mismatch in " + file.string() + ": " + join_limited(missing));
    }
    const auto n = static_cast<Index>(wanted.size());
    MatrixXd out(n, n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) out(i, j) = m.values(pos[wanted[i]], pos[wanted[j]]);
    }
    return out;
}

char complement(char a) {
    switch (a) {
        case 'A': return 'T';
        case 'T': return 'A';
        case 'C': return 'G';
        case 'G': return 'C';
        default: return '\0';
    }
}

std::string complement(const std::string& allele) {
    if (allele.size() != 1) return {};
    const char c = complement(allele[0]);
    return c ? std::string(1, c) : std::string{};
}

bool is_palindromic(const std::string& a, const std::string& b) {
    const auto ca = complement(a);
    return !ca.empty() && ca == b;
}

MatrixXd symmetrize(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

}  // namespace

void validate_summary(const MultivariableSummary& s) {
    const Index J = s.J();
    const Index K = s.K();
    if (K < 1) throw InputError("summary needs at least one exposure");
    if (J < K) {
        throw InputError("summary needs J >= K (J=" + std::to_string(J) + ", K=" + std::to_string(K) + ")");
    }
    if (s.outcome_assoc.size() != J) throw InputError("outcome association length does not match J");
    if (s.outcome_cov.rows() != J || s.outcome_cov.cols() != J) {
        throw InputError("outcome covariance must be J x J");
    }
    if (s.exposure_cov.rows() != J * K || s.exposure_cov.cols() != J * K) {
        throw InputError("exposure covariance must be JK x JK");
    }
    if (!(s.n_x > 0.0) || !(s.n_y > 0.0)) throw InputError("sample sizes must be positive");
    const double tol = 1e-9;
    const auto asym = [&](const MatrixXd& m) {
        return (m - m.transpose()).cwiseAbs().maxCoeff() > tol * std::max(1.0, m.cwiseAbs().maxCoeff());
    };
    if (asym(s.outcome_cov)) throw InputError("outcome covariance is not symmetric");
    if (asym(s.exposure_cov)) throw InputError("exposure covariance is not symmetric");
}

UnivariableGwasTables load_gwas_tables(const GwasPaths& paths, double n_x, double n_y) {
    if (!(n_x > 0.0) || !(n_y > 0.0)) throw InputError("sample sizes must be positive");

    UnivariableGwasTables t;
    t.n_x = n_x;
    t.n_y = n_y;

    // Exposure file.
    {
        TextTable tab = read_text_table(paths.exposures);
        const auto& header = tab.rows[0];
        if (header.size() < 5 || (header.size() - 3) % 2 != 0 || header[0] != "variant" ||
            header[1] != "effect_allele" || header[2] != "other_allele") {
            throw InputError("exposure header must be: variant effect_allele other_allele "
                             "beta_<name> se_<name> ... in " + paths.exposures.string());
        }
        const std::size_t K = (header.size() - 3) / 2;
        for (std::size_t k = 0; k < K; ++k) {
            const auto& b = header[3 + 2 * k];
            const auto& s = header[4 + 2 * k];
            if (!b.starts_with("beta_") || !s.starts_with("se_") || b.substr(5) != s.substr(3)) {
                throw InputError("exposure header columns " + b + "/" + s +
                                 " must be beta_<name>/se_<name>");
            }
            t.exposure_names.push_back(b.substr(5));
        }
        const std::size_t J = tab.rows.size() - 1;
        if (J == 0) throw InputError("exposure file has no variants: " + paths.exposures.string());
        t.exposure_beta.resize(static_cast<Index>(J), static_cast<Index>(K));
        t.exposure_se.resize(static_cast<Index>(J), static_cast<Index>(K));
        std::unordered_set<std::string> seen;
        for (std::size_t r = 1; r < tab.rows.size(); ++r) {
            const auto& row = tab.rows[r];
            const auto line = tab.line_numbers[r];
            if (row.size() != header.size()) {
                throw InputError("parse error: " + paths.exposures.string() + ":" + std::to_string(line) +
                                 ": expected " + std::to_string(header.size()) + " fields, got " +
                                 std::to_string(row.size()));
            }
            if (!seen.insert(row[0]).second) throw InputError("duplicate variant '" + row[0] + "' in exposure file");
            t.variants.push_back(row[0]);
            t.effect_allele.push_back(upper(row[1]));
            t.other_allele.push_back(upper(row[2]));
            const auto j = static_cast<Index>(r - 1);
            for (std::size_t k = 0; k < K; ++k) {
                t.exposure_beta(j, static_cast<Index>(k)) = number_at(row[3 + 2 * k], paths.exposures, line);
                const double se = number_at(row[4 + 2 * k], paths.exposures, line);
                if (!(se > 0.0)) {
                    throw InputError("nonpositive standard error for variant " + row[0] + " (" +
                                     paths.exposures.string() + ":" + std::to_string(line) + ")");
                }
                t.exposure_se(j, static_cast<Index>(k)) = se;
            }
        }
    }

    const auto J = static_cast<Index>(t.variants.size());
    const auto K = static_cast<Index>(t.exposure_names.size());

    // Outcome file, reordered to exposure order.
    {
        TextTable tab = read_text_table(paths.outcome);
        const auto& header = tab.rows[0];
        if (header.size() != 5 || header[0] != "variant" || header[1] != "effect_allele" ||
            header[2] != "other_allele" || header[3] != "beta" || header[4] != "se") {
            throw InputError("outcome header must be: variant effect_allele other_allele beta se in " +
                             paths.outcome.string());
        }
        struct Row {
            std::string ea, oa;
            double beta, se;
        };
        std::unordered_map<std::string, Row> rows;
        std::vector<std::string> order;
        for (std::size_t r = 1; r < tab.rows.size(); ++r) {
            const auto& row = tab.rows[r];
            const auto line = tab.line_numbers[r];
            if (row.size() != 5) {
                throw InputError("parse error: " + paths.outcome.string() + ":" + std::to_string(line) +
                                 ": expected 5 fields, got " + std::to_string(row.size()));
            }
            Row parsed{upper(row[1]), upper(row[2]), number_at(row[3], paths.outcome, line),
                       number_at(row[4], paths.outcome, line)};
            if (!(parsed.se > 0.0)) {
                throw InputError("nonpositive standard error for variant " + row[0] + " (" +
                                 paths.outcome.string() + ":" + std::to_string(line) + ")");
            }
            if (!rows.emplace(row[0], parsed).second) {
                throw InputError("duplicate variant '" + row[0] + "' in outcome file");
            }
            order.push_back(row[0]);
        }
        std::vector<std::string> offenders;
        std::unordered_set<std::string> exposure_ids(t.variants.begin(), t.variants.end());
        for (const auto& v : t.variants) {
            if (!rows.count(v)) offenders.push_back(v);
        }
        for (const auto& v : order) {
            if (!exposure_ids.count(v)) offenders.push_back(v);
        }
        if (!offenders.empty()) {
            throw InputError("variant mismatch between exposure and outcome files: " + join_limited(offenders));
        }
        t.outcome_beta.resize(J);
        t.outcome_se.resize(J);
        for (Index j = 0; j < J; ++j) {
            const Row& row = rows.at(t.variants[static_cast<std::size_t>(j)]);
            t.outcome_effect_allele.push_back(row.ea);
            t.outcome_other_allele.push_back(row.oa);
            t.outcome_beta(j) = row.beta;
            t.outcome_se(j) = row.se;
        }
    }

    t.ld = reorder_by_labels(read_square_matrix(paths.ld), t.variants, paths.ld);
    check_correlation(t.ld, "LD matrix");

    {
        auto cor = read_square_matrix(paths.exposure_cor);
        t.exposure_cor = reorder_by_labels(cor, t.exposure_names, paths.exposure_cor);
        if (t.exposure_cor.rows() != K) {
            throw InputError("dimension error: exposure correlation must be " + std::to_string(K) + "x" +
                             std::to_string(K));
        }
        check_correlation(t.exposure_cor, "exposure correlation matrix");
    }
    return t;
}

void write_gwas_tables(const UnivariableGwasTables& t, const GwasPaths& paths) {
    const auto open = [](const std::filesystem::path& p) {
        std::ofstream out(p);
        if (!out) throw InputError("cannot write file: " + p.string());
        out << std::setprecision(17);
        return out;
    };
    const Index J = t.num_variants();
    const Index K = t.num_exposures();
    {
        auto out = open(paths.exposures);
        out << "variant\teffect_allele\tother_allele";
        for (const auto& n : t.exposure_names) out << "\tbeta_" << n << "\tse_" << n;
        out << '\n';
        for (Index j = 0; j < J; ++j) {
            const auto ju = static_cast<std::size_t>(j);
            out << t.variants[ju] << '\t' << t.effect_allele[ju] << '\t' << t.other_allele[ju];
            for (Index k = 0; k < K; ++k) out << '\t' << t.exposure_beta(j, k) << '\t' << t.exposure_se(j, k);
            out << '\n';
        }
    }
    {
        auto out = open(paths.outcome);
        out << "variant\teffect_allele\tother_allele\tbeta\tse\n";
        for (Index j = 0; j < J; ++j) {
            const auto ju = static_cast<std::size_t>(j);
            out << t.variants[ju] << '\t' << t.outcome_effect_allele[ju] << '\t' << t.outcome_other_allele[ju]
                << '\t' << t.outcome_beta(j) << '\t' << t.outcome_se(j) << '\n';
        }
    }
    const auto write_matrix = [&](const std::filesystem::path& p, const MatrixXd& m,
                                  const std::vector<std::string>& labels) {
        auto out = open(p);
        for (std::size_t i = 0; i < labels.size(); ++i) out << (i ? "\t" : "") << labels[i];
        out << '\n';
        for (Index r = 0; r < m.rows(); ++r) {
            for (Index c = 0; c < m.cols(); ++c) out << (c ? "\t" : "") << m(r, c);
            out << '\n';
        }
    };
    write_matrix(paths.ld, t.ld, t.variants);
    write_matrix(paths.exposure_cor, t.exposure_cor, t.exposure_names);
}

UnivariableGwasTables harmonize_variants(const UnivariableGwasTables& tables, const HarmonizeOptions& options) {
    UnivariableGwasTables out = tables;
    const Index J = tables.num_variants();
    if (static_cast<Index>(tables.outcome_effect_allele.size()) != J ||
        static_cast<Index>(tables.effect_allele.size()) != J) {
        throw InputError("every variant needs declared alleles in both exposure and outcome tables");
    }
    std::vector<Index> flipped;
    for (Index j = 0; j < J; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        const std::string& e1 = tables.effect_allele[ju];
        const std::string& o1 = tables.other_allele[ju];
        const std::string& e2 = tables.outcome_effect_allele[ju];
        const std::string& o2 = tables.outcome_other_allele[ju];
        const std::string& id = tables.variants[ju];

        const bool ambiguous = is_palindromic(e1, o1) || is_palindromic(e2, o2);
        if (ambiguous && !options.allow_ambiguous) {
            throw InputError("unharmonizable variant " + id + ": strand-ambiguous alleles " + e1 + "/" + o1);
        }
        bool flip = false;
        if (e2 == e1 && o2 == o1) {
            flip = false;
        } else if (e2 == o1 && o2 == e1) {
            flip = true;
        } else if (!ambiguous && complement(e2) == e1 && complement(o2) == o1 && !e1.empty()) {
            flip = false;
        } else if (!ambiguous && complement(e2) == o1 && complement(o2) == e1 && !o1.empty()) {
            flip = true;
        } else {
            throw InputError("unharmonizable variant " + id + ": exposure alleles " + e1 + "/" + o1 +
                             " vs outcome alleles " + e2 + "/" + o2);
        }
        if (ambiguous) {
            out.warnings.push_back("strand-ambiguous variant " + id + " kept with literal allele matching");
        }
        out.outcome_effect_allele[ju] = e1;
        out.outcome_other_allele[ju] = o1;
        if (flip) {
            out.outcome_beta(j) = -out.outcome_beta(j);
            flipped.push_back(j);
        }
    }
    for (Index j : flipped) {
        out.ld.row(j) *= -1.0;
        out.ld.col(j) *= -1.0;  // diagonal restored to +1
    }
    return out;
}

MatrixXd repair_covariance(const MatrixXd& m, const std::string& name, std::vector<std::string>& warnings) {
    MatrixXd sym = symmetrize(m);
    const Index n = sym.rows();
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sym, Eigen::EigenvaluesOnly);
    const double floor = 1e-10 * sym.trace() / static_cast<double>(n);
    const double min_eig = eig.eigenvalues().minCoeff();
    if (!(floor > 0.0)) throw NumericalError("invalid covariance: " + name + " has nonpositive trace");
    if (min_eig < floor) {
        sym.diagonal().array() += floor;
        warnings.push_back(name + ": smallest eigenvalue " + std::to_string(min_eig) +
                           " below tolerance, ridge of " + std::to_string(floor) + " added");
        Eigen::LLT<MatrixXd> llt(sym);
        if (llt.info() != Eigen::Success) {
            throw NumericalError("invalid covariance: " + name + " is not positive definite after ridge repair");
        }
    }
    return sym;
}

MultivariableSummary build_multivariable_summary(const UnivariableGwasTables& t, const SummaryOptions& options) {
    const Index J = t.num_variants();
    const Index K = t.num_exposures();
    if (K < 1) throw InputError("need at least one exposure");
    if (J < K) throw InputError("need at least as many variants as exposures");
    if (t.ld.rows() != J || t.ld.cols() != J) throw InputError("dimension error: LD matrix must be J x J");
    if (t.exposure_cor.rows() != K || t.exposure_cor.cols() != K) {
        throw InputError("dimension error: exposure correlation must be K x K");
    }
    if ((t.exposure_se.array() <= 0.0).any() || (t.outcome_se.array() <= 0.0).any()) {
        throw InputError("nonpositive standard error");
    }

    const MatrixXd R = symmetrize(t.ld);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(R);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || hi / lo > options.max_ld_condition) {
        throw NumericalError("ill-conditioned LD: condition number " +
                             (lo > 0.0 ? std::to_string(hi / lo) : std::string("inf")));
    }
    const MatrixXd R_inv = eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() *
                           eig.eigenvectors().transpose();

    Eigen::LLT<MatrixXd> cor_llt(symmetrize(t.exposure_cor));
    if (cor_llt.info() != Eigen::Success) {
        throw NumericalError("invalid covariance: exposure correlation is not positive definite");
    }

    // Standardized-variant GLS: scale rows by 1/se into standardized units, apply
    // R^{-1}, and scale back so effects stay per effect allele.
    const auto multivariable = [&](const VectorXd& beta, const VectorXd& se) -> VectorXd {
        return se.asDiagonal() * (R_inv * beta.cwiseQuotient(se));
    };
    const auto cross_cov = [&](const VectorXd& se_a, const VectorXd& se_b) -> MatrixXd {
        return se_a.asDiagonal() * R_inv * se_b.asDiagonal();
    };

    MultivariableSummary s;
    s.n_x = t.n_x;
    s.n_y = t.n_y;
    s.warnings = t.warnings;
    s.outcome_assoc = multivariable(t.outcome_beta, t.outcome_se);
    s.exposure_assoc.resize(J, K);
    for (Index k = 0; k < K; ++k) s.exposure_assoc.col(k) = multivariable(t.exposure_beta.col(k), t.exposure_se.col(k));

    s.outcome_cov = repair_covariance(t.n_x * cross_cov(t.outcome_se, t.outcome_se), "outcome covariance", s.warnings);

    MatrixXd sigma_gamma(J * K, J * K);
    for (Index k = 0; k < K; ++k) {
        for (Index m = 0; m < K; ++m) {
            sigma_gamma.block(k * J, m * J, J, J) =
                t.exposure_cor(k, m) * t.n_x * cross_cov(t.exposure_se.col(k), t.exposure_se.col(m));
        }
    }
    s.exposure_cov = repair_covariance(sigma_gamma, "exposure covariance", s.warnings);
    return s;
}

UnivariableGwasTables subset_variants(const UnivariableGwasTables& t, const std::vector<Index>& rows) {
    UnivariableGwasTables out;
    const auto n = static_cast<Index>(rows.size());
    const Index K = t.num_exposures();
    out.exposure_names = t.exposure_names;
    out.exposure_cor = t.exposure_cor;
    out.n_x = t.n_x;
    out.n_y = t.n_y;
    out.warnings = t.warnings;
    out.exposure_beta.resize(n, K);
    out.exposure_se.resize(n, K);
    out.outcome_beta.resize(n);
    out.outcome_se.resize(n);
    out.ld.resize(n, n);
    for (Index i = 0; i < n; ++i) {
        const Index r = rows[static_cast<std::size_t>(i)];
        if (r < 0 || r >= t.num_variants()) throw InputError("variant subset index out of range");
        const auto ru = static_cast<std::size_t>(r);
        out.variants.push_back(t.variants[ru]);
        out.effect_allele.push_back(t.effect_allele[ru]);
        out.other_allele.push_back(t.other_allele[ru]);
        out.outcome_effect_allele.push_back(t.outcome_effect_allele[ru]);
        out.outcome_other_allele.push_back(t.outcome_other_allele[ru]);
        out.exposure_beta.row(i) = t.exposure_beta.row(r);
        out.exposure_se.row(i) = t.exposure_se.row(r);
        out.outcome_beta(i) = t.outcome_beta(r);
        out.outcome_se(i) = t.outcome_se(r);
        for (Index j = 0; j < n; ++j) out.ld(i, j) = t.ld(r, rows[static_cast<std::size_t>(j)]);
    }
    return out;
}

}  // namespace mvmr
