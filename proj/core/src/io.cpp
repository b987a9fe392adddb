#include "cmo/io.hpp"

#include "cmo/cohort.hpp"
#include "cmo/errors.hpp"

#include <json.hpp>

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

namespace cmo::io {

using nlohmann::json;

namespace {

std::string fmt(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::ofstream open_out(const fs::path& path, bool binary = false) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
    if (!out) fail(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
    return out;
}

std::ifstream open_in(const fs::path& path, bool binary = false) {
    std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
    if (!in) fail(ErrorKind::Io, "cannot open '" + path.string() + "' for reading");
    return in;
}

template <typename T>
void put_le(std::ostream& out, T value) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    const U bits = std::bit_cast<U>(value);
    char bytes[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    out.write(bytes, sizeof(U));
}

class Reader {
public:
    Reader(const fs::path& path) : path_(path), in_(open_in(path, true)) {}

    template <typename T>
    T get(const char* what) {
        using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
        unsigned char bytes[sizeof(U)];
        in_.read(reinterpret_cast<char*>(bytes), sizeof(U));
        if (in_.gcount() != static_cast<std::streamsize>(sizeof(U))) {
            fail(ErrorKind::Parse, path_.string() + ": truncated while reading " + what);
        }
        U bits = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(bytes[i]) << (8 * i);
        return std::bit_cast<T>(bits);
    }

    void magic(const std::array<char, 8>& expected, const char* what) {
        char buf[8];
        in_.read(buf, 8);
        if (in_.gcount() != 8 || std::memcmp(buf, expected.data(), 8) != 0)
            fail(ErrorKind::Parse, path_.string() + ": bad magic, not a " + what);
    }

    std::string bytes(std::size_t n, const char* what) {
        std::string s(n, '\0');
        in_.read(s.data(), static_cast<std::streamsize>(n));
        if (in_.gcount() != static_cast<std::streamsize>(n))
            fail(ErrorKind::Parse, path_.string() + ": truncated while reading " + what);
        return s;
    }

    Matrix matrix_row_major(Index rows, Index cols, const char* what) {
        Matrix m(rows, cols);
        for (Index i = 0; i < rows; ++i)
            for (Index j = 0; j < cols; ++j) m(i, j) = get<double>(what);
        return m;
    }

private:
    fs::path path_;
    std::ifstream in_;
};

void put_matrix_row_major(std::ostream& out, const Matrix& m) {
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) put_le(out, m(i, j));
}

void write_echo(std::ostream& out, const std::string& config_echo) {
    out << "# config: " << config_echo << "\n";
}

template <typename T>
T manifest_get(const json& j, const char* key, const fs::path& path) {
    if (!j.contains(key)) fail(ErrorKind::Parse, path.string() + ": manifest lacks key '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        fail(ErrorKind::Parse, path.string() + ": manifest key '" + key + "': " + e.what());
    }
}

}  // namespace

std::string to_string(MatrixFormat f) { return f == MatrixFormat::Binary ? "binary" : "text"; }

MatrixFormat matrix_format_from_string(const std::string& name) {
    if (name == "text") return MatrixFormat::Text;
    if (name == "binary") return MatrixFormat::Binary;
    fail(ErrorKind::InvalidArgument, "unknown matrix format '" + name + "'");
}

void write_matrix_text(const fs::path& path, const Matrix& m) {
    auto out = open_out(path);
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            if (j) out << ' ';
            out << fmt(m(i, j));
        }
        out << '\n';
    }
    if (!out) fail(ErrorKind::Io, "failed writing '" + path.string() + "'");
}

Matrix read_matrix_text(const fs::path& path) {
    auto in = open_in(path);
    std::vector<std::vector<double>> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::vector<double> row;
        const char* p = line.data();
        const char* end = p + line.size();
        while (p < end) {
            while (p < end && (*p == ' ' || *p == '\t' || *p == ',' || *p == '\r')) ++p;
            if (p == end) break;
            double v = 0.0;
            const auto res = std::from_chars(p, end, v);
            if (res.ec != std::errc()) {
                fail(ErrorKind::Parse, path.string() + ":" + std::to_string(line_no) +
                                           ": cannot parse number near '" +
                                           std::string(p, std::min<std::size_t>(16, end - p)) + "'");
            }
            row.push_back(v);
            p = res.ptr;
        }
        if (!row.empty()) rows.push_back(std::move(row));
    }
    const auto p = static_cast<Index>(rows.size());
    if (p == 0) fail(ErrorKind::Parse, path.string() + ": empty matrix file");
    Matrix m(p, p);
    for (Index i = 0; i < p; ++i) {
        const auto& row = rows[static_cast<std::size_t>(i)];
        if (static_cast<Index>(row.size()) != p) {
            fail(ErrorKind::Parse, path.string() + ": row " + std::to_string(i + 1) + " has " +
                                       std::to_string(row.size()) + " entries, expected " +
                                       std::to_string(p));
        }
        for (Index j = 0; j < p; ++j) m(i, j) = row[static_cast<std::size_t>(j)];
    }
    return m;
}

void write_matrix_binary(const fs::path& path, const Matrix& m) {
    require(m.rows() == m.cols(), ErrorKind::DimensionMismatch, "binary matrices must be square");
    auto out = open_out(path, true);
    out.write(kMatrixMagic.data(), kMatrixMagic.size());
    put_le(out, static_cast<std::uint32_t>(m.rows()));
    put_matrix_row_major(out, m);
    if (!out) fail(ErrorKind::Io, "failed writing '" + path.string() + "'");
}

Matrix read_matrix_binary(const fs::path& path) {
    Reader r(path);
    r.magic(kMatrixMagic, "binary matrix");
    const auto p = static_cast<Index>(r.get<std::uint32_t>("matrix size"));
    if (p == 0) fail(ErrorKind::Parse, path.string() + ": matrix size is zero");
    return r.matrix_row_major(p, p, "matrix entries");
}

Matrix read_matrix(const fs::path& path) {
    auto in = open_in(path, true);
    char buf[8] = {};
    in.read(buf, 8);
    const bool binary = in.gcount() == 8 && std::memcmp(buf, kMatrixMagic.data(), 8) == 0;
    in.close();
    return binary ? read_matrix_binary(path) : read_matrix_text(path);
}

void save_cohort(const fs::path& dir, const CohortDataset& cohort,
                 const CohortSaveOptions& options) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorKind::Io, "cannot create '" + dir.string() + "': " + ec.message());
    json manifest;
    manifest["format"] = "cmo-cohort";
    manifest["version"] = 1;
    manifest["p"] = cohort.p();
    manifest["n"] = cohort.n();
    manifest["score_name"] = cohort.score_name;
    manifest["matrix_format"] = to_string(options.format);
    manifest["residualized"] = options.residualized;
    json files = json::array();
    const char* ext = options.format == MatrixFormat::Binary ? ".bin" : ".txt";
    for (Index i = 0; i < cohort.n(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "matrix_%04d%s", static_cast<int>(i), ext);
        files.push_back(name);
        if (options.format == MatrixFormat::Binary) write_matrix_binary(dir / name, cohort.gamma(i));
        else write_matrix_text(dir / name, cohort.gamma(i));
    }
    manifest["matrices"] = files;
    manifest["scores"] = std::vector<double>(cohort.scores.data(),
                                             cohort.scores.data() + cohort.scores.size());
    manifest["config"] = json::parse(options.config_echo, nullptr, false);
    auto out = open_out(dir / "manifest");
    out << manifest.dump(2) << '\n';
}

CohortDataset load_cohort(const fs::path& dir, const CohortLoadOptions& options) {
    const fs::path manifest_path = dir / "manifest";
    json manifest;
    {
        auto in = open_in(manifest_path);
        try {
            manifest = json::parse(in);
        } catch (const json::exception& e) {
            fail(ErrorKind::Parse, manifest_path.string() + ": " + e.what());
        }
    }
    const auto n = manifest_get<std::int64_t>(manifest, "n", manifest_path);
    const auto p = manifest_get<std::int64_t>(manifest, "p", manifest_path);
    const auto files = manifest_get<std::vector<std::string>>(manifest, "matrices", manifest_path);
    const auto scores = manifest_get<std::vector<double>>(manifest, "scores", manifest_path);
    const std::string name = manifest.value("score_name", std::string("score"));
    const bool residualized = manifest.value("residualized", false);
    if (static_cast<std::int64_t>(files.size()) != n || static_cast<std::int64_t>(scores.size()) != n) {
        fail(ErrorKind::Parse, manifest_path.string() + ": n = " + std::to_string(n) +
                                   " but " + std::to_string(files.size()) + " matrices and " +
                                   std::to_string(scores.size()) + " scores are listed");
    }
    std::vector<Matrix> mats;
    mats.reserve(files.size());
    for (std::size_t i = 0; i < files.size(); ++i) {
        try {
            mats.push_back(read_matrix(dir / files[i]));
        } catch (const Error& e) {
            fail(e.kind(), "record " + std::to_string(i) + " (" + files[i] + "): " + e.what());
        }
        if (mats.back().rows() != p) {
            fail(ErrorKind::DimensionMismatch,
                 "record " + std::to_string(i) + " (" + files[i] + ") is " +
                     std::to_string(mats.back().rows()) + "x" + std::to_string(mats.back().cols()) +
                     " but the manifest declares P = " + std::to_string(p));
        }
    }
    const Vector y = Eigen::Map<const Vector>(scores.data(), static_cast<Index>(scores.size()));
    CohortDataset cohort = validate_cohort(mats, y, name, CohortCheck{options.check_psd});
    if (options.residualize && !residualized) cohort = residualize_cohort(cohort);
    return cohort;
}

void save_ground_truth(const fs::path& dir, const GroundTruth& truth,
                       const std::string& config_echo) {
    auto dump = [&](const char* file, const Matrix& m, const char* prefix) {
        auto out = open_out(dir / file);
        write_echo(out, config_echo);
        for (Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << prefix << j;
        out << '\n';
        for (Index i = 0; i < m.rows(); ++i) {
            for (Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << fmt(m(i, j));
            out << '\n';
        }
    };
    dump("true_basis.csv", truth.true_x, "x");
    dump("true_loadings.csv", truth.true_loadings.transpose(), "c");
    dump("anchors.csv", truth.anchors.transpose(), "a");
    Matrix alpha = truth.true_alpha;
    dump("alpha.csv", alpha, "alpha");
    Matrix scores(truth.clean_scores.size(), 2);
    scores << truth.clean_scores, truth.noisy_scores;
    auto out = open_out(dir / "scores.csv");
    write_echo(out, config_echo);
    out << "sample,clean_score,noisy_score\n";
    for (Index i = 0; i < scores.rows(); ++i)
        out << i << ',' << fmt(scores(i, 0)) << ',' << fmt(scores(i, 1)) << '\n';
}

void save_model(const fs::path& path, const FittedModel& model, const std::string& config_echo) {
    auto out = open_out(path, true);
    const Index p = model.basis_x.rows();
    const Index r = model.basis_x.cols();
    const Index n = model.dual.anchors.cols();
    out.write(kModelMagic.data(), kModelMagic.size());
    put_le(out, kModelVersion);
    put_le(out, static_cast<std::uint32_t>(p));
    put_le(out, static_cast<std::uint32_t>(r));
    put_le(out, static_cast<std::uint32_t>(n));
    put_matrix_row_major(out, model.basis_x);
    put_matrix_row_major(out, model.dual.anchors);
    for (Index i = 0; i < n; ++i) put_le(out, model.dual.alpha(i));
    put_le(out, model.dual.ridge);

    const KernelSpec& k = model.spec;
    put_le(out, k.sigma_sq);
    put_le(out, k.rho);
    put_le(out, k.ell);
    put_le(out, static_cast<std::uint32_t>(k.terms));

    const Hyperparams& h = model.hp;
    put_le(out, h.lambda);
    put_le(out, h.gamma1);
    put_le(out, h.gamma2);
    put_le(out, h.gamma3);
    put_le(out, static_cast<std::uint32_t>(h.rank_r));
    put_le(out, h.prox_step);
    put_le(out, static_cast<std::uint32_t>(h.prox_iters));
    put_le(out, h.dual_step);
    put_le(out, h.dual_step_decay);
    put_le(out, h.outer_tol);
    put_le(out, static_cast<std::uint32_t>(h.max_outer_iters));
    put_le(out, h.constraint_tol);
    put_le(out, h.tr.delta0);
    put_le(out, h.tr.delta_max);
    put_le(out, h.tr.eta_accept);
    put_le(out, h.tr.shrink);
    put_le(out, h.tr.expand);
    put_le(out, static_cast<std::uint32_t>(h.tr.max_iters));
    put_le(out, h.tr.grad_tol);
    put_le(out, static_cast<std::uint32_t>(h.tr.subproblem_max_iters));

    const FitSummary& s = model.summary;
    put_le(out, s.final_total_j);
    put_le(out, s.final_constraint_residual);
    put_le(out, static_cast<std::uint32_t>(s.iterations));
    put_le(out, static_cast<std::uint32_t>(s.converged ? 1 : 0));

    put_le(out, static_cast<std::uint32_t>(config_echo.size()));
    out.write(config_echo.data(), static_cast<std::streamsize>(config_echo.size()));
    if (!out) fail(ErrorKind::Io, "failed writing '" + path.string() + "'");
}

FittedModel load_model(const fs::path& path, std::string* config_echo) {
    Reader rd(path);
    rd.magic(kModelMagic, "model file");
    const auto version = rd.get<std::uint32_t>("version");
    if (version != kModelVersion)
        fail(ErrorKind::Parse, path.string() + ": unsupported model version " + std::to_string(version));
    const auto p = static_cast<Index>(rd.get<std::uint32_t>("P"));
    const auto r = static_cast<Index>(rd.get<std::uint32_t>("R"));
    const auto n = static_cast<Index>(rd.get<std::uint32_t>("N"));
    FittedModel m;
    m.basis_x = rd.matrix_row_major(p, r, "basis");
    m.dual.anchors = rd.matrix_row_major(r, n, "anchors");
    m.dual.alpha.resize(n);
    for (Index i = 0; i < n; ++i) m.dual.alpha(i) = rd.get<double>("alpha");
    m.dual.ridge = rd.get<double>("ridge");

    m.spec.sigma_sq = rd.get<double>("sigma_sq");
    m.spec.rho = rd.get<double>("rho");
    m.spec.ell = rd.get<double>("ell");
    const auto terms = rd.get<std::uint32_t>("kernel terms");
    if (terms > 2) fail(ErrorKind::Parse, path.string() + ": invalid kernel terms code");
    m.spec.terms = static_cast<KernelTerms>(terms);
    m.dual.spec = m.spec;

    Hyperparams& h = m.hp;
    h.lambda = rd.get<double>("lambda");
    h.gamma1 = rd.get<double>("gamma1");
    h.gamma2 = rd.get<double>("gamma2");
    h.gamma3 = rd.get<double>("gamma3");
    h.rank_r = static_cast<int>(rd.get<std::uint32_t>("rank"));
    h.prox_step = rd.get<double>("prox_step");
    h.prox_iters = static_cast<int>(rd.get<std::uint32_t>("prox_iters"));
    h.dual_step = rd.get<double>("dual_step");
    h.dual_step_decay = rd.get<double>("dual_step_decay");
    h.outer_tol = rd.get<double>("outer_tol");
    h.max_outer_iters = static_cast<int>(rd.get<std::uint32_t>("max_outer_iters"));
    h.constraint_tol = rd.get<double>("constraint_tol");
    h.tr.delta0 = rd.get<double>("tr.delta0");
    h.tr.delta_max = rd.get<double>("tr.delta_max");
    h.tr.eta_accept = rd.get<double>("tr.eta_accept");
    h.tr.shrink = rd.get<double>("tr.shrink");
    h.tr.expand = rd.get<double>("tr.expand");
    h.tr.max_iters = static_cast<int>(rd.get<std::uint32_t>("tr.max_iters"));
    h.tr.grad_tol = rd.get<double>("tr.grad_tol");
    h.tr.subproblem_max_iters = static_cast<int>(rd.get<std::uint32_t>("tr.subproblem_max_iters"));

    m.summary.final_total_j = rd.get<double>("final_total_j");
    m.summary.final_constraint_residual = rd.get<double>("final_constraint_residual");
    m.summary.iterations = static_cast<int>(rd.get<std::uint32_t>("iterations"));
    m.summary.converged = rd.get<std::uint32_t>("converged") != 0;

    const auto len = rd.get<std::uint32_t>("config length");
    std::string echo = rd.bytes(len, "config echo");
    if (config_echo) *config_echo = std::move(echo);
    return m;
}

void write_trace_csv(const fs::path& path, const FitTrace& trace, const std::string& config_echo) {
    auto out = open_out(path);
    write_echo(out, config_echo);
    out << "iteration,fit_term,regression_term,l1_x,l2_c,l2_w,total_j,constraint_residual,"
           "dual_step,prox_step,x_block_before,x_block_after,c_block_max_increase\n";
    for (const auto& r : trace.records) {
        const auto& o = r.objective;
        out << r.iteration << ',' << fmt(o.fit_term) << ',' << fmt(o.regression_term) << ','
            << fmt(o.l1_x) << ',' << fmt(o.l2_c) << ',' << fmt(o.l2_w) << ',' << fmt(o.total_j)
            << ',' << fmt(o.constraint_residual) << ',' << fmt(r.dual_step) << ','
            << fmt(r.prox_step) << ',' << fmt(r.x_block_before) << ',' << fmt(r.x_block_after)
            << ',' << fmt(r.c_block_max_increase) << '\n';
    }
}

void write_report_csv(const fs::path& path, const EvalReport& report,
                      const std::string& config_echo) {
    auto out = open_out(path);
    write_echo(out, config_echo);
    out << "method,fold,n_train,n_test,mae_train,mae_test,mi_train,mi_test,converged\n";
    for (const auto& f : report.folds) {
        out << report.method << ',' << f.fold << ',' << f.train.size() << ',' << f.test.size()
            << ',' << fmt(f.mae_train) << ',' << fmt(f.mae_test) << ',' << fmt(f.mi_train) << ','
            << fmt(f.mi_test) << ',' << (f.converged ? 1 : 0) << '\n';
    }
    out << report.method << ",all," << report.train_true.size() << ',' << report.test_true.size()
        << ',' << fmt(report.mae_train) << ',' << fmt(report.mae_test) << ','
        << fmt(report.mi_train) << ',' << fmt(report.mi_test) << ",\n";
}

void write_predictions_csv(const fs::path& path, const EvalReport& report,
                           const std::string& config_echo) {
    auto out = open_out(path);
    write_echo(out, config_echo);
    out << "sample,fold,y_true,y_pred\n";
    for (Index i = 0; i < report.test_true.size(); ++i) {
        out << i << ',' << report.assignment[static_cast<std::size_t>(i)] << ','
            << fmt(report.test_true(i)) << ',' << fmt(report.test_pred(i)) << '\n';
    }
}

void write_sweep_csv(const fs::path& path, const std::vector<SweepEntry>& entries,
                     const std::string& config_echo) {
    auto out = open_out(path);
    write_echo(out, config_echo);
    out << "rank,lambda,gamma1,gamma2,gamma3,sigma_sq,rho,ell,ok,mae_train,mae_test,mi_test,error\n";
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        std::string err = e.error;
        for (char& c : err)
            if (c == ',' || c == '\n') c = ';';
        out << i + 1 << ',' << fmt(e.hp.lambda) << ',' << fmt(e.hp.gamma1) << ','
            << fmt(e.hp.gamma2) << ',' << fmt(e.hp.gamma3) << ',' << fmt(e.spec.sigma_sq) << ','
            << fmt(e.spec.rho) << ',' << fmt(e.spec.ell) << ',' << (e.ok ? 1 : 0) << ','
            << fmt(e.mae_train) << ',' << fmt(e.mae_test) << ',' << fmt(e.mi_test) << ',' << err
            << '\n';
    }
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
    auto in = open_in(path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (!line.empty() && line.back() == ',') fields.emplace_back();
        rows.push_back(std::move(fields));
    }
    return rows;
}

}  // namespace cmo::io
