#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "agro/error.hpp"

namespace agro {

struct Transcript {
  std::string text;
  std::string language = "en";
  std::optional<double> confidence;  // [0, 1] when the adapter reports one
  bool no_speech = false;            // required for empty text
};

struct AudioRef {
  std::filesystem::path path;
  std::string format = "wav";  // wav | pcm
  int sample_rate = 16000;
};

/// Non-zero exit, timeout or spawn failure of an external adapter.
class AdapterError : public Error {
 public:
  AdapterError(int exit_code, std::string diagnostics, const std::string& message)
      : Error(Errc::AdapterFailure, message), exit_code_(exit_code), diagnostics_(std::move(diagnostics)) {}

  int exit_code() const noexcept { return exit_code_; }  // -1 when killed or never started
  const std::string& diagnostics() const noexcept { return diagnostics_; }

 private:
  int exit_code_;
  std::string diagnostics_;
};

/// Throws UnsupportedFormat unless the tag is wav/pcm with a positive rate
/// (and equal to `expected_rate` when that is non-zero).
void validate_format(const AudioRef& audio, int expected_rate = 0);

class AsrAdapter {
 public:
  virtual ~AsrAdapter() = default;
  virtual Transcript transcribe(const AudioRef& audio) const = 0;
};

class TtsAdapter {
 public:
  virtual ~TtsAdapter() = default;
  /// Writes audio for `text` to `output` and returns a reference to it.
  virtual AudioRef synthesize(std::string_view text, const std::filesystem::path& output) const = 0;
};

/// Sidecar convention: the text for `x.wav` lives in `x.wav.txt`.
std::filesystem::path sidecar_path(const std::filesystem::path& audio);

/// Reads the transcript from the audio's sidecar file.
class PassthroughAsr final : public AsrAdapter {
 public:
  explicit PassthroughAsr(std::string language = "en") : language_(std::move(language)) {}
  Transcript transcribe(const AudioRef& audio) const override;

 private:
  std::string language_;
};

/// Writes the text to the sidecar and a one-second silent WAV as the audio.
class PassthroughTts final : public TtsAdapter {
 public:
  AudioRef synthesize(std::string_view text, const std::filesystem::path& output) const override;
};

struct CommandConfig {
  std::vector<std::string> argv;  // argv[0] is looked up on PATH
  std::chrono::milliseconds timeout{30000};
  int expected_sample_rate = 16000;  // 0 accepts any rate
  std::string language = "en";
};

/// ASR via a child process: audio on stdin, UTF-8 transcript on stdout.
class CommandAsr final : public AsrAdapter {
 public:
  explicit CommandAsr(CommandConfig config);
  Transcript transcribe(const AudioRef& audio) const override;

 private:
  CommandConfig config_;
};

/// TTS via a child process: text on stdin, audio bytes on stdout.
class CommandTts final : public TtsAdapter {
 public:
  explicit CommandTts(CommandConfig config);
  AudioRef synthesize(std::string_view text, const std::filesystem::path& output) const override;

 private:
  CommandConfig config_;
};

struct ProcessResult {
  int exit_code = 0;
  std::string diagnostics;  // captured stderr
};

/// Runs argv with stdin/stdout redirected to files; throws AdapterError on
/// spawn failure, non-zero exit or timeout.
ProcessResult run_process(std::span<const std::string> argv, const std::filesystem::path& stdin_path,
                          const std::filesystem::path& stdout_path, std::chrono::milliseconds timeout);

struct WavInfo {
  int channels = 0;
  int sample_rate = 0;
  int bits_per_sample = 0;
  std::size_t data_bytes = 0;
};

/// 16-bit mono PCM silence.
void write_silent_wav(const std::filesystem::path& path, int sample_rate = 16000, double seconds = 1.0);
/// Parses a canonical RIFF/WAVE PCM header; throws UnsupportedFormat.
WavInfo read_wav_info(const std::filesystem::path& path);

enum class IntentKind { GetRecommendation, GetPriceForecast, Unknown };

std::string_view to_string(IntentKind kind);

struct Intent {
  IntentKind kind = IntentKind::Unknown;
  std::map<std::string, std::string> slots;  // location, crop, horizon
};

struct KeywordSet {
  std::vector<std::string> recommend;
  std::vector<std::string> price;
};

/// Keyword lists per language tag.
struct IntentKeywords {
  std::map<std::string, KeywordSet> languages;

  /// Keywords for `language`, or English when that slot is missing or empty.
  const KeywordSet& for_language(std::string_view language) const;
};

IntentKeywords default_intent_keywords();
/// JSON: {"en": {"recommend": [...], "price": [...]}, "kn": {...}}.
IntentKeywords load_intent_keywords(const std::filesystem::path& path);

/// Rule-based and total. A crop plus a price keyword is a price query; a
/// district plus a recommendation keyword is a recommendation query.
/// Matching is case-insensitive on whole words, longest phrase first.
Intent parse_intent(const Transcript& transcript, std::span<const std::string> districts,
                    std::span<const std::string> crops, const IntentKeywords& keywords = default_intent_keywords());

}  // namespace agro
