#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace dat {

// Prompt bodies are plain UTF-8 text with {placeholder} slots. They ship as
// editable assets; the builtin defaults keep the pipeline usable without a
// template directory.
struct PromptTemplate {
    std::string name;
    std::string body;
};

enum class TemplateRole {
    source_generation,  // needs {query}, {m}, {source_lang}
    target_translation,  // needs {source}, {source_lang}, {target_lang}, {demonstrations}
    query_translation,   // needs {query}, {source_lang}, {target_lang}, {demonstrations}
};

const char* role_name(TemplateRole role);

// Replaces every {key} occurrence for the provided values. Unknown
// placeholders are left untouched.
std::string render_template(const PromptTemplate& tmpl,
                            const std::map<std::string, std::string>& values);

class TemplateLibrary {
public:
    // Builtin defaults for all three roles.
    static TemplateLibrary builtin();

    // Builtin defaults overridden by <role_name>.txt files found in `dir`.
    // Throws ConfigError when an override is missing a required placeholder.
    static TemplateLibrary from_directory(const std::filesystem::path& dir);

    const PromptTemplate& get(TemplateRole role) const;

private:
    std::map<TemplateRole, PromptTemplate> templates_;
};

}  // namespace dat
