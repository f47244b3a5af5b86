#include "sade/smt.hpp"

#include <fcntl.h>
#include <poll.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cctype>
#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <cstring>
#include <optional>
#include <sstream>
#include <unordered_set>

#include "sade/sexpr.hpp"

extern char** environ;

namespace sade {

namespace {

constexpr long long kHandshakeDeadlineMs = 180000;  // first call pays VM start-up
constexpr long long kPlainDeadlineMs = 60000;

long long now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(steady_clock::now().time_since_epoch()).count();
}

std::vector<std::string> split_whitespace(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

bool file_executable(const std::string& path) {
  return ::access(path.c_str(), X_OK) == 0;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

// Simple SMT-LIB symbols: no quoting needed, usable verbatim on the wire.
bool valid_symbol(const std::string& name) {
  if (name.empty()) return false;
  auto ok = [](char c, bool first) {
    if (std::isalpha(static_cast<unsigned char>(c))) return true;
    if (std::isdigit(static_cast<unsigned char>(c))) return !first;
    return std::strchr("~!@$%^&*_+=<>.?/-", c) != nullptr;
  };
  if (!ok(name[0], true)) return false;
  for (std::size_t i = 1; i < name.size(); ++i)
    if (!ok(name[i], false)) return false;
  return true;
}

bool output_has_rejection(const std::string& out) {
  if (out.find("(error") != std::string::npos) return true;
  // Solvers answer "unsupported" (bare line) to options/logics they lack.
  std::istringstream in(out);
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line == "unsupported") return true;
  }
  return false;
}

std::optional<Verdict> last_verdict_line(const std::string& out) {
  std::optional<Verdict> found;
  std::istringstream in(out);
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line == "sat") found = Verdict::Sat;
    else if (line == "unsat") found = Verdict::Unsat;
    else if (line == "unknown") found = Verdict::Unknown;
  }
  return found;
}

// Exact model value: integer/decimal numerals, (- x), and (/ p q).
// Anything else (e.g. algebraic root descriptions) gets no exact value and
// the caller falls back to decimal printing.
std::optional<Rational> try_exact_value(const SExpr& e) {
  if (e.is_atom) return try_parse_rational(e.atom);
  if (e.size() == 2 && e.at(0).is_atom && e.at(0).atom == "-") {
    auto inner = try_exact_value(e.at(1));
    if (!inner) return std::nullopt;
    return -*inner;
  }
  if (e.size() == 3 && e.at(0).is_atom && e.at(0).atom == "/") {
    auto num = try_exact_value(e.at(1));
    auto den = try_exact_value(e.at(2));
    if (!num || !den || *den == 0) return std::nullopt;
    return *num / *den;
  }
  return std::nullopt;
}

// Decimal-printed value; a trailing '?' marks a truncated (approximate)
// expansion of an irrational.
std::optional<SolverValue> try_decimal_value(const SExpr& e) {
  if (e.is_atom) {
    std::string text = e.atom;
    bool truncated = false;
    if (!text.empty() && text.back() == '?') {
      truncated = true;
      text.pop_back();
    }
    auto r = try_parse_rational(text);
    if (!r) return std::nullopt;
    return SolverValue{*r, truncated};
  }
  if (e.size() == 2 && e.at(0).is_atom && e.at(0).atom == "-") {
    auto inner = try_decimal_value(e.at(1));
    if (!inner) return std::nullopt;
    inner->value = -inner->value;
    return inner;
  }
  if (e.size() == 3 && e.at(0).is_atom && e.at(0).atom == "/") {
    auto num = try_decimal_value(e.at(1));
    auto den = try_decimal_value(e.at(2));
    if (!num || !den || den->value == 0) return std::nullopt;
    return SolverValue{num->value / den->value, num->approximate || den->approximate};
  }
  return std::nullopt;
}

// Parses a get-value response `((sym val) ...)` into symbol/value pairs.
std::vector<std::pair<std::string, SExpr>> parse_value_pairs(const std::string& out,
                                                             const std::string& what) {
  SExpr root;
  try {
    root = parse_sexpr(out);
  } catch (const SExprError& e) {
    throw SolverError(what + ": unreadable solver response: " + e.what());
  }
  if (root.is_atom) throw SolverError(what + ": unexpected solver response: " + out);
  std::vector<std::pair<std::string, SExpr>> pairs;
  for (const SExpr& entry : root.children) {
    if (entry.is_atom || entry.size() != 2 || !entry.at(0).is_atom)
      throw SolverError(what + ": unexpected solver response entry: " + entry.str());
    pairs.emplace_back(entry.at(0).atom, entry.at(1));
  }
  return pairs;
}

void ignore_sigpipe_once() {
  static bool done = [] {
    std::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)done;
}

}  // namespace

std::string verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Sat: return "sat";
    case Verdict::Unsat: return "unsat";
    case Verdict::Unknown: return "unknown";
  }
  return "unknown";
}

std::vector<std::string> default_solver_command() {
  if (const char* env = std::getenv("SADE_SOLVER_CMD")) {
    auto cmd = split_whitespace(env);
    if (!cmd.empty()) return cmd;
  }
  if (const char* path = std::getenv("PATH")) {
    std::istringstream in(path);
    std::string dir;
    while (std::getline(in, dir, ':')) {
      if (!dir.empty() && file_executable(dir + "/z3")) return {"z3", "-in"};
    }
  }
#ifdef SADE_SOURCE_DIR
  return {"node", std::string(SADE_SOURCE_DIR) + "/tools/z3server/z3server.js"};
#else
  return {};
#endif
}

SolverSession::SolverSession(SolverConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.solver_command.empty()) cfg_.solver_command = default_solver_command();
  validate_config();
  scopes_.push_back(Scope{});
  spawn();
  try {
    handshake();
  } catch (...) {
    shutdown();
    throw;
  }
}

SolverSession::~SolverSession() { shutdown(); }

void SolverSession::validate_config() const {
  if (cfg_.per_check_timeout_ms <= 0)
    throw SolverError("solver config: per-check timeout must be positive, got " +
                      std::to_string(cfg_.per_check_timeout_ms));
  if (cfg_.decimal_precision <= 0)
    throw SolverError("solver config: decimal precision must be positive, got " +
                      std::to_string(cfg_.decimal_precision));
  if (cfg_.solver_command.empty())
    throw SolverError("solver config: no solver command configured and none found "
                      "(set SADE_SOLVER_CMD or install z3)");
  if (cfg_.logic.empty()) throw SolverError("solver config: logic must be non-empty");
}

void SolverSession::spawn() {
  ignore_sigpipe_once();

  int to_pipe[2] = {-1, -1};
  int from_pipe[2] = {-1, -1};
  if (::pipe(to_pipe) != 0 || ::pipe(from_pipe) != 0) {
    if (to_pipe[0] >= 0) ::close(to_pipe[0]);
    if (to_pipe[1] >= 0) ::close(to_pipe[1]);
    throw SolverError(std::string("failed to create solver pipes: ") + std::strerror(errno));
  }

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, to_pipe[0], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, from_pipe[1], STDOUT_FILENO);
  posix_spawn_file_actions_addclose(&actions, to_pipe[0]);
  posix_spawn_file_actions_addclose(&actions, to_pipe[1]);
  posix_spawn_file_actions_addclose(&actions, from_pipe[0]);
  posix_spawn_file_actions_addclose(&actions, from_pipe[1]);

  std::vector<char*> argv;
  argv.reserve(cfg_.solver_command.size() + 1);
  for (const std::string& a : cfg_.solver_command)
    argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);

  pid_t pid = -1;
  int rc = ::posix_spawnp(&pid, argv[0], &actions, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  ::close(to_pipe[0]);
  ::close(from_pipe[1]);

  if (rc != 0) {
    ::close(to_pipe[1]);
    ::close(from_pipe[0]);
    throw SolverError("failed to start solver '" + join(cfg_.solver_command, " ") +
                      "': " + std::strerror(rc));
  }

  pid_ = static_cast<int>(pid);
  to_child_ = to_pipe[1];
  from_child_ = from_pipe[0];
  ::fcntl(to_child_, F_SETFD, FD_CLOEXEC);
  ::fcntl(from_child_, F_SETFD, FD_CLOEXEC);
}

void SolverSession::handshake() {
  struct Option {
    std::string command;
    bool strict;  // rejection is a handshake failure
  };
  const std::vector<Option> steps = {
      {"(set-option :print-success false)", false},
      {"(set-option :produce-models true)", true},
      {"(set-option :produce-unsat-cores true)", true},
      // Validates that the solver understands the time-limit option; the
      // real per-check value is armed around each check-sat, because a
      // standing limit also cancels trivial commands like push.
      {"(set-option :timeout 4294967295)", true},
      {"(set-option :random-seed " + std::to_string(cfg_.random_seed) + ")", true},
      {"(set-option :pp.decimal-precision " + std::to_string(cfg_.decimal_precision) + ")",
       false},
      {"(set-logic " + cfg_.logic + ")", true},
  };
  for (const Option& step : steps)
    transact(step.command, "handshake " + step.command, step.strict, kHandshakeDeadlineMs);
}

void SolverSession::shutdown() noexcept {
  if (to_child_ >= 0) {
    const char* bye = "(exit)\n";
    ssize_t ignored = ::write(to_child_, bye, std::strlen(bye));
    (void)ignored;
    ::close(to_child_);
    to_child_ = -1;
  }
  if (from_child_ >= 0) {
    ::close(from_child_);
    from_child_ = -1;
  }
  if (pid_ > 0) {
    int status = 0;
    long long deadline = now_ms() + 2000;
    for (;;) {
      pid_t r = ::waitpid(pid_, &status, WNOHANG);
      if (r == pid_ || (r < 0 && errno == ECHILD)) break;
      if (now_ms() >= deadline) {
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, &status, 0);
        break;
      }
      ::usleep(20000);
    }
    pid_ = -1;
  }
}

void SolverSession::ensure_usable() const {
  if (poisoned_) throw SolverCrash(poison_reason_);
  if (pid_ <= 0) throw SolverCrash("solver session is not running");
}

void SolverSession::fail_crashed(const std::string& why) {
  poisoned_ = true;
  poison_reason_ = "solver session unusable: " + why;
  if (pid_ > 0) ::kill(pid_, SIGKILL);
  shutdown();
  throw SolverCrash(poison_reason_);
}

std::string SolverSession::transact(const std::string& commands, const std::string& what,
                                    bool strict, long long deadline_budget_ms) {
  ensure_usable();
  const std::string sentinel = "::" + std::to_string(++sentinel_counter_) + "::";
  std::string payload = commands;
  payload += "\n(echo \"" + sentinel + "\")\n";

  std::size_t written = 0;
  while (written < payload.size()) {
    ssize_t n = ::write(to_child_, payload.data() + written, payload.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail_crashed(what + ": write to solver failed: " + std::strerror(errno));
    }
    written += static_cast<std::size_t>(n);
  }

  const long long deadline = now_ms() + deadline_budget_ms;
  for (;;) {
    // Look for the sentinel as a complete line; everything before it is the
    // operation's output.
    std::size_t search_from = 0;
    while (search_from <= inbuf_.size()) {
      std::size_t pos = inbuf_.find(sentinel, search_from);
      if (pos == std::string::npos) break;
      bool at_line_start = pos == 0 || inbuf_[pos - 1] == '\n';
      std::size_t end = pos + sentinel.size();
      std::size_t line_end = end;
      while (line_end < inbuf_.size() && inbuf_[line_end] == '\r') ++line_end;
      if (at_line_start && line_end < inbuf_.size() && inbuf_[line_end] == '\n') {
        std::string out = inbuf_.substr(0, pos);
        inbuf_.erase(0, line_end + 1);
        if (strict && output_has_rejection(out)) {
          std::string detail = out;
          while (!detail.empty() && (detail.back() == '\n' || detail.back() == '\r'))
            detail.pop_back();
          throw SolverError(what + ": solver rejected input: " + detail);
        }
        return out;
      }
      search_from = pos + 1;
    }

    long long remaining = deadline - now_ms();
    if (remaining <= 0)
      fail_crashed(what + ": no solver response within " +
                   std::to_string(deadline_budget_ms) + " ms");

    struct pollfd pfd = {from_child_, POLLIN, 0};
    int pr = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(remaining, 200)));
    if (pr < 0) {
      if (errno == EINTR) continue;
      fail_crashed(what + ": poll failed: " + std::strerror(errno));
    }
    if (pr == 0) continue;

    char buf[65536];
    ssize_t n = ::read(from_child_, buf, sizeof buf);
    if (n == 0) {
      std::string tail = inbuf_.size() > 400 ? inbuf_.substr(inbuf_.size() - 400) : inbuf_;
      fail_crashed(what + ": solver exited unexpectedly" +
                   (tail.empty() ? "" : "; last output: " + tail));
    }
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      fail_crashed(what + ": read from solver failed: " + std::strerror(errno));
    }
    inbuf_.append(buf, static_cast<std::size_t>(n));
  }
}

bool SolverSession::is_declared(const std::string& name) const {
  for (const Scope& s : scopes_)
    for (const std::string& n : s.names)
      if (n == name) return true;
  return false;
}

void SolverSession::note_symbol(const std::string& name) {
  scopes_.back().names.push_back(name);
}

void SolverSession::declare(const std::vector<std::string>& names, const std::string& sort) {
  ensure_usable();
  std::unordered_set<std::string> batch;
  std::string commands;
  for (const std::string& name : names) {
    if (!valid_symbol(name))
      throw SolverError("declare: '" + name + "' is not a plain solver symbol");
    if (is_declared(name) || !batch.insert(name).second)
      throw SolverError("declare: symbol '" + name + "' is already declared");
    commands += "(declare-const " + name + " " + sort + ")\n";
  }
  if (names.empty()) return;
  transact(commands, "declare " + join(names, " "), true, kPlainDeadlineMs);
  for (const std::string& name : names) {
    note_symbol(name);
    (sort == "Real" ? real_symbols_ : bool_symbols_).push_back(name);
  }
}

void SolverSession::declare_reals(const std::vector<std::string>& names) {
  declare(names, "Real");
}

void SolverSession::declare_bools(const std::vector<std::string>& names) {
  declare(names, "Bool");
}

void SolverSession::assert_formula(const std::string& text, const std::string& label) {
  ensure_usable();
  // Malformed text would desync the wire protocol, so reject it here with
  // the offending text rather than relying on the solver's error message.
  try {
    auto exprs = parse_sexprs(text);
    if (exprs.size() != 1)
      throw SolverError("assert: expected exactly one formula, got " +
                        std::to_string(exprs.size()) + " in: " + text);
  } catch (const SExprError& e) {
    throw SolverError("assert: malformed formula '" + text + "': " + e.what());
  }

  if (label.empty()) {
    transact("(assert " + text + ")", "assert " + text, true, kPlainDeadlineMs);
    return;
  }
  if (!valid_symbol(label))
    throw SolverError("assert: label '" + label + "' is not a plain solver symbol");
  if (is_declared(label))
    throw SolverError("assert: label '" + label + "' is already declared");
  std::string commands = "(declare-const " + label + " Bool)\n";
  commands += "(assert (=> " + label + " " + text + "))";
  transact(commands, "assert [" + label + "] " + text, true, kPlainDeadlineMs);
  note_symbol(label);
  bool_symbols_.push_back(label);
}

void SolverSession::push() {
  ensure_usable();
  transact("(push 1)", "push", true, kPlainDeadlineMs);
  scopes_.push_back(Scope{});
}

void SolverSession::pop() {
  ensure_usable();
  if (scopes_.size() <= 1) throw SolverError("pop: no scope to pop (depth is 0)");
  transact("(pop 1)", "pop", true, kPlainDeadlineMs);
  std::unordered_set<std::string> gone(scopes_.back().names.begin(),
                                       scopes_.back().names.end());
  scopes_.pop_back();
  auto drop = [&gone](std::vector<std::string>& v) {
    std::erase_if(v, [&gone](const std::string& n) { return gone.count(n) > 0; });
  };
  drop(real_symbols_);
  drop(bool_symbols_);
}

CheckResult SolverSession::check() { return run_check({}); }

CheckResult SolverSession::check(const std::vector<std::string>& assumptions) {
  return run_check(assumptions);
}

CheckResult SolverSession::run_check(const std::vector<std::string>& assumptions) {
  ensure_usable();
  for (const std::string& a : assumptions) {
    bool known = false;
    for (const std::string& b : bool_symbols_) known = known || (b == a);
    if (!known)
      throw SolverError("check: assumption '" + a + "' is not a declared guard label");
  }

  std::string command = assumptions.empty()
                            ? "(check-sat)"
                            : "(check-sat-assuming (" + join(assumptions, " ") + "))";
  const long long budget = 4LL * cfg_.per_check_timeout_ms + kPlainDeadlineMs;

  // The time limit is armed for this check only and lifted right after, in
  // the same exchange, so follow-up commands (value and core queries,
  // push/pop) never get cancelled by a leftover limit.
  std::string payload = "(set-option :timeout " +
                        std::to_string(cfg_.per_check_timeout_ms) + ")\n" + command +
                        "\n(set-option :timeout 4294967295)";

  CheckResult result;
  long long started = now_ms();
  std::string out = transact(payload, command, true, budget);
  auto verdict = last_verdict_line(out);
  result.elapsed_ms = now_ms() - started;
  if (!verdict) {
    std::string detail = out.empty() ? "<no output>" : out;
    fail_crashed(command + ": solver answered without a verdict: " + detail);
  }
  result.verdict = *verdict;

  if (result.verdict == Verdict::Sat) {
    collect_values(result);
  } else if (result.verdict == Verdict::Unsat && !assumptions.empty()) {
    std::string core_out = transact("(get-unsat-core)", "get-unsat-core", true,
                                    kPlainDeadlineMs);
    SExpr core;
    try {
      core = parse_sexpr(core_out);
    } catch (const SExprError& e) {
      throw SolverError(std::string("get-unsat-core: unreadable solver response: ") +
                        e.what());
    }
    if (core.is_atom)
      throw SolverError("get-unsat-core: unexpected solver response: " + core_out);
    for (const SExpr& entry : core.children) {
      if (!entry.is_atom)
        throw SolverError("get-unsat-core: unexpected core entry: " + entry.str());
      result.unsat_core.push_back(entry.atom);
    }
  }
  return result;
}

void SolverSession::collect_values(CheckResult& result) {
  std::vector<std::string> symbols = real_symbols_;
  symbols.insert(symbols.end(), bool_symbols_.begin(), bool_symbols_.end());
  if (symbols.empty()) return;
  std::unordered_set<std::string> bools(bool_symbols_.begin(), bool_symbols_.end());

  std::string out = transact("(get-value (" + join(symbols, " ") + "))", "get-value",
                             true, kPlainDeadlineMs);
  std::vector<std::string> needs_decimal;
  for (auto& [sym, val] : parse_value_pairs(out, "get-value")) {
    if (bools.count(sym)) {
      if (!val.is_atom || (val.atom != "true" && val.atom != "false"))
        throw SolverError("get-value: unexpected boolean value for '" + sym +
                          "': " + val.str());
      result.bool_values[sym] = val.atom == "true";
      continue;
    }
    if (auto exact = try_exact_value(val)) {
      result.values[sym] = SolverValue{*exact, false};
    } else {
      needs_decimal.push_back(sym);
    }
  }
  if (needs_decimal.empty()) return;

  // Values the solver cannot print as rationals (algebraic irrationals) are
  // re-read as fixed-precision decimals; a trailing '?' marks truncation.
  std::string commands = "(set-option :pp.decimal true)\n";
  commands += "(get-value (" + join(needs_decimal, " ") + "))\n";
  commands += "(set-option :pp.decimal false)";
  std::string dec_out = transact(commands, "get-value (decimal)", true, kPlainDeadlineMs);
  for (auto& [sym, val] : parse_value_pairs(dec_out, "get-value (decimal)")) {
    auto parsed = try_decimal_value(val);
    if (!parsed)
      throw SolverError("get-value: unparseable solver value for '" + sym +
                        "': " + val.str());
    result.values[sym] = *parsed;
  }
  for (const std::string& sym : needs_decimal)
    if (!result.values.count(sym))
      throw SolverError("get-value: solver returned no decimal value for '" + sym + "'");
}

void SolverSession::reset() {
  ensure_usable();
  transact("(reset)", "reset", true, kPlainDeadlineMs);
  scopes_.clear();
  scopes_.push_back(Scope{});
  real_symbols_.clear();
  bool_symbols_.clear();
  handshake();
}

bool SolverSession::alive() const { return pid_ > 0 && !poisoned_; }

}  // namespace sade
