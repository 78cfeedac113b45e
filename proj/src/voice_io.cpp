#include "agro/voice_io.hpp"

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <thread>

#include "agro/csv.hpp"

extern char** environ;

namespace agro {
namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::MissingFile, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::MissingFile, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// Scratch file removed on scope exit.
class TempFile {
 public:
  explicit TempFile(std::string_view tag) {
    static std::atomic<unsigned> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("agro-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + "-" + std::string(tag));
  }
  ~TempFile() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
  TempFile(const TempFile&) = delete;
  TempFile& operator=(const TempFile&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

std::string trim_trailing_newlines(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

Transcript make_transcript(std::string text, const std::string& language) {
  Transcript t;
  t.text = trim_trailing_newlines(std::move(text));
  t.language = language;
  t.no_speech = t.text.find_first_not_of(" \t\r\n") == std::string::npos;
  if (t.no_speech) t.text.clear();
  return t;
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(std::string_view s, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[at + i]);
  return v;
}

std::uint16_t get_u16(std::string_view s, std::size_t at) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(s[at]) | (static_cast<unsigned char>(s[at + 1]) << 8));
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (const char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c >= 0x80) {
      current.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

bool contains_phrase(const std::vector<std::string>& tokens, const std::vector<std::string>& phrase) {
  if (phrase.empty() || phrase.size() > tokens.size()) return false;
  return std::search(tokens.begin(), tokens.end(), phrase.begin(), phrase.end()) != tokens.end();
}

// Longest phrase (by token count, then characters) that occurs in `tokens`.
std::optional<std::string> longest_match(const std::vector<std::string>& tokens,
                                         std::span<const std::string> vocabulary) {
  std::vector<std::pair<std::vector<std::string>, std::string>> entries;
  for (const auto& v : vocabulary) entries.emplace_back(tokenize(v), v);
  std::ranges::sort(entries, [](const auto& a, const auto& b) {
    if (a.first.size() != b.first.size()) return a.first.size() > b.first.size();
    if (a.second.size() != b.second.size()) return a.second.size() > b.second.size();
    return a.second < b.second;
  });
  for (const auto& [phrase, name] : entries) {
    if (contains_phrase(tokens, phrase)) return name;
  }
  return std::nullopt;
}

bool any_keyword(const std::vector<std::string>& tokens, const std::vector<std::string>& keywords) {
  return std::ranges::any_of(keywords, [&](const std::string& k) { return contains_phrase(tokens, tokenize(k)); });
}

}  // namespace

void validate_format(const AudioRef& audio, int expected_rate) {
  const auto fmt = csv::lower(audio.format);
  if (fmt != "wav" && fmt != "pcm") fail(Errc::UnsupportedFormat, "unsupported audio format '" + audio.format + "'");
  if (audio.sample_rate <= 0) fail(Errc::UnsupportedFormat, "audio sample rate must be positive");
  if (expected_rate > 0 && audio.sample_rate != expected_rate) {
    fail(Errc::UnsupportedFormat, "expected " + std::to_string(expected_rate) + " Hz audio, got " +
                                      std::to_string(audio.sample_rate) + " Hz");
  }
}

std::filesystem::path sidecar_path(const std::filesystem::path& audio) {
  return std::filesystem::path(audio.string() + ".txt");
}

Transcript PassthroughAsr::transcribe(const AudioRef& audio) const {
  validate_format(audio);
  return make_transcript(slurp(sidecar_path(audio.path)), language_);
}

AudioRef PassthroughTts::synthesize(std::string_view text, const std::filesystem::path& output) const {
  require(!text.empty(), "cannot synthesize empty text");
  spit(sidecar_path(output), text);
  write_silent_wav(output);
  return {output, "wav", 16000};
}

ProcessResult run_process(std::span<const std::string> argv, const std::filesystem::path& stdin_path,
                          const std::filesystem::path& stdout_path, std::chrono::milliseconds timeout) {
  require(!argv.empty(), "adapter command is empty");
  TempFile err("stderr");

  std::vector<char*> args;
  for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, STDIN_FILENO, stdin_path.c_str(), O_RDONLY, 0);
  posix_spawn_file_actions_addopen(&actions, STDOUT_FILENO, stdout_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  posix_spawn_file_actions_addopen(&actions, STDERR_FILENO, err.path().c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);

  pid_t pid = 0;
  const int rc = posix_spawnp(&pid, args[0], &actions, nullptr, args.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  if (rc != 0) {
    throw AdapterError(-1, std::strerror(rc), "cannot start adapter '" + argv[0] + "': " + std::strerror(rc));
  }

  const auto deadline = std::chrono::steady_clock::now() + timeout;
  int status = 0;
  for (;;) {
    const pid_t done = ::waitpid(pid, &status, WNOHANG);
    if (done == pid) break;
    if (done < 0 && errno != EINTR) throw AdapterError(-1, std::strerror(errno), "waitpid failed");
    if (std::chrono::steady_clock::now() >= deadline) {
      ::kill(pid, SIGKILL);
      ::waitpid(pid, &status, 0);
      throw AdapterError(-1, std::filesystem::exists(err.path()) ? slurp(err.path()) : "",
                         "adapter '" + argv[0] + "' timed out after " + std::to_string(timeout.count()) + " ms");
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }

  ProcessResult result;
  result.diagnostics = std::filesystem::exists(err.path()) ? slurp(err.path()) : "";
  if (WIFEXITED(status)) {
    result.exit_code = WEXITSTATUS(status);
  } else {
    result.exit_code = -1;
  }
  if (result.exit_code == 127 && result.diagnostics.empty()) result.diagnostics = "command not found";
  if (result.exit_code != 0) {
    throw AdapterError(result.exit_code, result.diagnostics,
                       "adapter '" + argv[0] + "' exited with status " + std::to_string(result.exit_code));
  }
  return result;
}

CommandAsr::CommandAsr(CommandConfig config) : config_(std::move(config)) {
  require(!config_.argv.empty(), "ASR adapter needs a command");
}

Transcript CommandAsr::transcribe(const AudioRef& audio) const {
  validate_format(audio, config_.expected_sample_rate);
  if (!std::filesystem::exists(audio.path)) fail(Errc::MissingFile, "audio file not found: " + audio.path.string());
  TempFile out("asr.txt");
  run_process(config_.argv, audio.path, out.path(), config_.timeout);
  return make_transcript(slurp(out.path()), config_.language);
}

CommandTts::CommandTts(CommandConfig config) : config_(std::move(config)) {
  require(!config_.argv.empty(), "TTS adapter needs a command");
}

AudioRef CommandTts::synthesize(std::string_view text, const std::filesystem::path& output) const {
  require(!text.empty(), "cannot synthesize empty text");
  TempFile in("tts.txt");
  spit(in.path(), text);
  run_process(config_.argv, in.path(), output, config_.timeout);
  AudioRef ref{output, "wav", config_.expected_sample_rate > 0 ? config_.expected_sample_rate : 16000};
  validate_format(ref, config_.expected_sample_rate);
  return ref;
}

void write_silent_wav(const std::filesystem::path& path, int sample_rate, double seconds) {
  require(sample_rate > 0 && seconds > 0.0, "WAV needs a positive rate and duration");
  constexpr std::uint16_t kChannels = 1;
  constexpr std::uint16_t kBits = 16;
  const auto samples = static_cast<std::uint32_t>(std::lround(sample_rate * seconds));
  const std::uint32_t data_bytes = samples * kChannels * (kBits / 8);

  std::string wav = "RIFF";
  put_u32(wav, 36 + data_bytes);
  wav += "WAVEfmt ";
  put_u32(wav, 16);
  put_u16(wav, 1);  // PCM
  put_u16(wav, kChannels);
  put_u32(wav, static_cast<std::uint32_t>(sample_rate));
  put_u32(wav, static_cast<std::uint32_t>(sample_rate) * kChannels * (kBits / 8));
  put_u16(wav, kChannels * (kBits / 8));
  put_u16(wav, kBits);
  wav += "data";
  put_u32(wav, data_bytes);
  wav.append(data_bytes, '\0');
  spit(path, wav);
}

WavInfo read_wav_info(const std::filesystem::path& path) {
  const std::string bytes = slurp(path);
  const auto bad = [&](const std::string& why) -> WavInfo {
    fail(Errc::UnsupportedFormat, path.string() + ": " + why);
  };
  if (bytes.size() < 44 || bytes.compare(0, 4, "RIFF") != 0 || bytes.compare(8, 4, "WAVE") != 0) {
    return bad("not a RIFF/WAVE file");
  }
  if (get_u32(bytes, 4) != bytes.size() - 8) return bad("RIFF size does not match file size");
  std::size_t at = 12;
  WavInfo info;
  bool have_fmt = false;
  while (at + 8 <= bytes.size()) {
    const std::string_view id(bytes.data() + at, 4);
    const std::uint32_t size = get_u32(bytes, at + 4);
    const std::size_t body = at + 8;
    if (body + size > bytes.size()) return bad("truncated chunk");
    if (id == "fmt ") {
      if (size < 16 || get_u16(bytes, body) != 1) return bad("only PCM is supported");
      info.channels = get_u16(bytes, body + 2);
      info.sample_rate = static_cast<int>(get_u32(bytes, body + 4));
      info.bits_per_sample = get_u16(bytes, body + 14);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) return bad("data chunk before fmt chunk");
      info.data_bytes = size;
      return info;
    }
    at = body + size + (size & 1);
  }
  return bad("no data chunk");
}

std::string_view to_string(IntentKind kind) {
  switch (kind) {
    case IntentKind::GetRecommendation: return "GetRecommendation";
    case IntentKind::GetPriceForecast: return "GetPriceForecast";
    case IntentKind::Unknown: break;
  }
  return "Unknown";
}

const KeywordSet& IntentKeywords::for_language(std::string_view language) const {
  const auto it = languages.find(csv::lower(language));
  if (it != languages.end() && !it->second.recommend.empty() && !it->second.price.empty()) return it->second;
  static const KeywordSet empty;
  const auto en = languages.find("en");
  return en == languages.end() ? empty : en->second;
}

IntentKeywords default_intent_keywords() {
  IntentKeywords k;
  k.languages["en"] = {
      {"recommend", "recommendation", "suggest", "suggestion", "advise", "advice", "which crop", "what crop",
       "what should i grow", "what should i plant", "best crop"},
      {"price", "prices", "rate", "rates", "cost", "forecast", "worth", "market"}};
  k.languages["kn"] = {};
  return k;
}

IntentKeywords load_intent_keywords(const std::filesystem::path& path) {
  IntentKeywords k;
  try {
    const auto doc = nlohmann::json::parse(slurp(path));
    for (const auto& [lang, set] : doc.items()) {
      k.languages[csv::lower(lang)] = {set.value("recommend", std::vector<std::string>{}),
                                       set.value("price", std::vector<std::string>{})};
    }
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::SchemaMismatch, path.string() + ": " + e.what());
  }
  return k;
}

Intent parse_intent(const Transcript& transcript, std::span<const std::string> districts,
                    std::span<const std::string> crops, const IntentKeywords& keywords) {
  Intent intent;
  const auto tokens = tokenize(transcript.text);
  if (tokens.empty()) return intent;
  const auto& words = keywords.for_language(transcript.language);

  const auto crop = longest_match(tokens, crops);
  if (crop && any_keyword(tokens, words.price)) {
    intent.kind = IntentKind::GetPriceForecast;
    intent.slots["crop"] = *crop;
    const auto number = std::ranges::find_if(tokens, [](const std::string& t) {
      return t.size() <= 3 && std::ranges::all_of(t, [](char c) { return c >= '0' && c <= '9'; });
    });
    if (number != tokens.end()) intent.slots["horizon"] = std::to_string(std::stoi(*number));
    return intent;
  }
  const auto location = longest_match(tokens, districts);
  if (location && any_keyword(tokens, words.recommend)) {
    intent.kind = IntentKind::GetRecommendation;
    intent.slots["location"] = *location;
  }
  return intent;
}

}  // namespace agro
