#include "dosedr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "dosedr/csv.hpp"
#include "dosedr/errors.hpp"
#include "dosedr/rng.hpp"

namespace dosedr {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

Dataset::Dataset(Eigen::MatrixXd covariates, Eigen::MatrixXd surrogates,
                 Eigen::VectorXd treatment, Eigen::VectorXd outcome,
                 std::vector<std::uint8_t> labels)
    : covariates_(std::move(covariates)),
      surrogates_(std::move(surrogates)),
      treatment_(std::move(treatment)),
      outcome_(std::move(outcome)),
      labels_(std::move(labels)) {
    const Eigen::Index n = treatment_.size();
    if (covariates_.rows() != n || surrogates_.rows() != n ||
        outcome_.size() != n || static_cast<Eigen::Index>(labels_.size()) != n) {
        throw ValidationError("dataset fields have mismatched row counts");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!std::isfinite(treatment_[i]))
            throw ValidationError("non-finite treatment at row " + std::to_string(i));
        if (labels_[i] != 0 && labels_[i] != 1)
            throw ValidationError("label must be 0 or 1 at row " + std::to_string(i));
        const bool y_present = !std::isnan(outcome_[i]);
        if (y_present != (labels_[i] == 1))
            throw ValidationError("R/Y consistency violated at row " + std::to_string(i) +
                                  " (R=" + std::to_string(int(labels_[i])) +
                                  (y_present ? ", Y present)" : ", Y missing)"));
        if (y_present && !std::isfinite(outcome_[i]))
            throw ValidationError("non-finite outcome at row " + std::to_string(i));
        n_labeled_ += labels_[i];
    }
    if (!covariates_.allFinite())
        throw ValidationError("non-finite covariate value");
    if (!surrogates_.allFinite())
        throw ValidationError("non-finite surrogate value");

    covariate_names.resize(covariates_.cols());
    for (Eigen::Index j = 0; j < covariates_.cols(); ++j)
        covariate_names[j] = "v" + std::to_string(j + 1);
    surrogate_names.resize(surrogates_.cols());
    for (Eigen::Index j = 0; j < surrogates_.cols(); ++j)
        surrogate_names[j] = "s" + std::to_string(j + 1);
}

Eigen::RowVectorXd Dataset::x_row(Eigen::Index i) const {
    Eigen::RowVectorXd x(p() + q());
    x.head(p()) = covariates_.row(i);
    x.tail(q()) = surrogates_.row(i);
    return x;
}

Dataset Dataset::subset(const std::vector<Eigen::Index>& rows) const {
    const Eigen::Index m = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd v(m, p()), s(m, q());
    Eigen::VectorXd a(m), y(m);
    std::vector<std::uint8_t> r(rows.size());
    for (Eigen::Index k = 0; k < m; ++k) {
        const Eigen::Index i = rows[static_cast<std::size_t>(k)];
        v.row(k) = covariates_.row(i);
        s.row(k) = surrogates_.row(i);
        a[k] = treatment_[i];
        y[k] = outcome_[i];
        r[static_cast<std::size_t>(k)] = labels_[i];
    }
    Dataset out(std::move(v), std::move(s), std::move(a), std::move(y), std::move(r));
    out.covariate_names = covariate_names;
    out.surrogate_names = surrogate_names;
    out.treatment_name = treatment_name;
    out.outcome_name = outcome_name;
    out.label_name = label_name;
    return out;
}

Dataset Dataset::labeled_subset() const {
    std::vector<Eigen::Index> rows;
    rows.reserve(static_cast<std::size_t>(n_labeled_));
    for (Eigen::Index i = 0; i < n(); ++i)
        if (labeled(i)) rows.push_back(i);
    return subset(rows);
}

namespace {

double parse_cell_or_throw(const std::string& cell, std::size_t row, const std::string& col,
                           const std::string& path) {
    double x;
    if (!csv::parse_double(cell, x)) {
        throw ParseError("malformed numeric cell '" + cell + "' at data row " +
                         std::to_string(row + 1) + ", column '" + col + "' of " + path);
    }
    return x;
}

bool cell_is_missing(const std::string& cell) { return cell.empty() || cell == "NA"; }

} // namespace

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
    if (schema.treatment.empty()) throw UsageError("schema: no treatment column given");
    if (schema.outcome.empty()) throw UsageError("schema: no outcome column given");
    if (schema.covariates.empty()) throw UsageError("schema: at least one covariate column required");

    const csv::Table table = csv::read_file(path);
    const std::size_t a_col = table.column(schema.treatment);
    const std::size_t y_col = table.column(schema.outcome);
    std::vector<std::size_t> v_cols, s_cols;
    for (const auto& name : schema.covariates) v_cols.push_back(table.column(name));
    for (const auto& name : schema.surrogates) s_cols.push_back(table.column(name));
    const bool has_label = !schema.label.empty();
    const std::size_t r_col = has_label ? table.column(schema.label) : 0;

    const Eigen::Index p = static_cast<Eigen::Index>(v_cols.size());
    const Eigen::Index q = static_cast<Eigen::Index>(s_cols.size());
    std::vector<Eigen::RowVectorXd> v_rows, s_rows;
    std::vector<double> a_vals, y_vals;
    std::vector<std::uint8_t> r_vals;
    Eigen::Index dropped = 0;

    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        bool missing_required = cell_is_missing(row[a_col]);
        for (std::size_t c : v_cols) missing_required = missing_required || cell_is_missing(row[c]);
        for (std::size_t c : s_cols) missing_required = missing_required || cell_is_missing(row[c]);
        if (missing_required) {
            ++dropped;
            continue;
        }
        Eigen::RowVectorXd v(p), s(q);
        for (Eigen::Index j = 0; j < p; ++j)
            v[j] = parse_cell_or_throw(row[v_cols[static_cast<std::size_t>(j)]], i,
                                       schema.covariates[static_cast<std::size_t>(j)], path);
        for (Eigen::Index j = 0; j < q; ++j)
            s[j] = parse_cell_or_throw(row[s_cols[static_cast<std::size_t>(j)]], i,
                                       schema.surrogates[static_cast<std::size_t>(j)], path);
        const double a = parse_cell_or_throw(row[a_col], i, schema.treatment, path);

        const bool y_missing = cell_is_missing(row[y_col]);
        double y = kNaN;
        if (!y_missing) y = parse_cell_or_throw(row[y_col], i, schema.outcome, path);

        std::uint8_t r;
        if (has_label) {
            const double rv = parse_cell_or_throw(row[r_col], i, schema.label, path);
            if (rv != 0.0 && rv != 1.0)
                throw ParseError("label cell must be 0 or 1 at data row " + std::to_string(i + 1));
            r = static_cast<std::uint8_t>(rv);
            if (r == 1 && y_missing)
                throw ValidationError("R=1 but outcome missing at data row " + std::to_string(i + 1));
            if (r == 0 && !y_missing)
                throw ValidationError("R=0 but outcome present at data row " + std::to_string(i + 1));
        } else {
            r = y_missing ? 0 : 1;
        }

        v_rows.push_back(std::move(v));
        s_rows.push_back(std::move(s));
        a_vals.push_back(a);
        y_vals.push_back(y);
        r_vals.push_back(r);
    }

    const Eigen::Index n = static_cast<Eigen::Index>(a_vals.size());
    Eigen::MatrixXd v(n, p), s(n, q);
    Eigen::VectorXd a(n), y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        v.row(i) = v_rows[static_cast<std::size_t>(i)];
        s.row(i) = s_rows[static_cast<std::size_t>(i)];
        a[i] = a_vals[static_cast<std::size_t>(i)];
        y[i] = y_vals[static_cast<std::size_t>(i)];
    }
    Dataset data(std::move(v), std::move(s), std::move(a), std::move(y), std::move(r_vals));
    data.covariate_names = schema.covariates;
    data.surrogate_names = schema.surrogates;
    data.treatment_name = schema.treatment;
    data.outcome_name = schema.outcome;
    if (has_label) data.label_name = schema.label;
    data.set_dropped_rows(dropped);
    return data;
}

void save_csv(const std::string& path, const Dataset& data) {
    csv::Table table;
    for (const auto& name : data.covariate_names) table.header.push_back(name);
    for (const auto& name : data.surrogate_names) table.header.push_back(name);
    table.header.push_back(data.treatment_name);
    table.header.push_back(data.outcome_name);
    table.header.push_back(data.label_name);
    table.rows.reserve(static_cast<std::size_t>(data.n()));
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        std::vector<std::string> row;
        row.reserve(table.header.size());
        for (Eigen::Index j = 0; j < data.p(); ++j)
            row.push_back(csv::format_double(data.covariates()(i, j)));
        for (Eigen::Index j = 0; j < data.q(); ++j)
            row.push_back(csv::format_double(data.surrogates()(i, j)));
        row.push_back(csv::format_double(data.a(i)));
        row.push_back(csv::format_double(data.y(i)));  // empty when missing
        row.push_back(data.labeled(i) ? "1" : "0");
        table.rows.push_back(std::move(row));
    }
    csv::write_file(path, table);
}

std::vector<Eigen::Index> FoldAssignment::rows_in_fold(int fold) const {
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < fold_of_row.size(); ++i)
        if (fold_of_row[i] == fold) rows.push_back(static_cast<Eigen::Index>(i));
    return rows;
}

FoldAssignment split_folds(const Dataset& data, std::uint64_t seed, int k) {
    if (k != 2 && k != 3) throw UsageError("fold count must be 2 or 3");
    const Eigen::Index n = data.n();
    if (n < k) throw ValidationError("cannot split " + std::to_string(n) + " rows into " +
                                     std::to_string(k) + " folds");

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Rng rng = make_rng(seed);
    for (std::size_t i = order.size() - 1; i > 0; --i) {
        // Modulo bias is ~n / 2^64; irrelevant at these sizes.
        std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
        std::swap(order[i], order[j]);
    }

    FoldAssignment fa;
    fa.k = k;
    fa.seed = seed;
    fa.fold_of_row.assign(static_cast<std::size_t>(n), -1);
    const Eigen::Index base = n / k, extra = n % k;
    Eigen::Index pos = 0;
    for (int f = 0; f < k; ++f) {
        const Eigen::Index size = base + (f < extra ? 1 : 0);
        for (Eigen::Index s = 0; s < size; ++s, ++pos)
            fa.fold_of_row[static_cast<std::size_t>(order[static_cast<std::size_t>(pos)])] = f;
    }
    return fa;
}

ValidationReport validate(const Dataset& data) {
    ValidationReport rep;
    rep.n = data.n();
    rep.n_labeled = data.n_labeled();
    rep.n_unlabeled = data.n_unlabeled();
    rep.p = data.p();
    rep.q = data.q();
    rep.dropped_rows = data.dropped_rows();
    if (rep.n == 0) {
        rep.fatal = true;
        rep.flags.push_back("empty dataset");
        return rep;
    }
    rep.treatment_min = data.treatment().minCoeff();
    rep.treatment_max = data.treatment().maxCoeff();
    rep.label_rate = static_cast<double>(rep.n_labeled) / static_cast<double>(rep.n);
    if (rep.n_labeled == 0) {
        rep.fatal = true;
        rep.flags.push_back("no labeled rows");
    }
    if (!data.treatment().allFinite() || !data.covariates().allFinite() ||
        !data.surrogates().allFinite()) {
        rep.fatal = true;
        rep.flags.push_back("non-finite values present");
    }
    if (rep.dropped_rows > 0)
        rep.flags.push_back(std::to_string(rep.dropped_rows) + " rows dropped at load (missing cells)");
    if (rep.treatment_min == rep.treatment_max)
        rep.flags.push_back("treatment is constant");
    return rep;
}

std::string ValidationReport::to_string() const {
    std::ostringstream os;
    os << "n=" << n << " n1=" << n_labeled << " n2=" << n_unlabeled
       << " p=" << p << " q=" << q
       << " label_rate=" << label_rate
       << " treatment_range=[" << treatment_min << "," << treatment_max << "]";
    for (const auto& f : flags) os << "\n  flag: " << f << (fatal ? " (fatal)" : "");
    return os.str();
}

} // namespace dosedr
