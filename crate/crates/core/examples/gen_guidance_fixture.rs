//! Regenerates the reference guidance artifact fixture used by the
//! integration tests and the README walkthrough.
//!
//! The artifact is written with [`critjudge::guidance::save_artifact`], so the
//! bytes on disk are the canonical serialization and the sha256 sidecar is
//! consistent by construction. Run from anywhere:
//!
//! ```text
//! cargo run -p critjudge --example gen_guidance_fixture
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use critjudge::guidance::{save_artifact, GuidanceArtifact, GuidanceBlock, Provenance};
use critjudge::model::TaskCategory;

fn block(
    patterns: &[&str],
    generation: &str,
    judging: &str,
    final_judging: &str,
) -> GuidanceBlock {
    GuidanceBlock {
        key_divergence_patterns: patterns.iter().map(|p| p.to_string()).collect(),
        criterion_generation_guidance: generation.to_string(),
        criterion_judging_guidance: judging.to_string(),
        final_judging_guidance: final_judging.to_string(),
    }
}

fn global_block() -> GuidanceBlock {
    block(
        &[
            "Humans prioritize UI/UX design and visual correctness over code structure and \
             efficiency when screenshots diverge from code.",
            "Humans value completeness and adherence to requirements more than efficiency or \
             maintainability when both solutions are correct.",
            "Humans often weigh correctness and UI/UX design more heavily than maintainability \
             and explainability, especially in interactive or visual tasks.",
        ],
        "When generating criteria, focus on properties that directly impact user experience and \
         task-specific requirements. Prioritize correctness, UI/UX design, and visual \
         correctness over abstract concepts like maintainability or efficiency unless \
         explicitly requested. Ensure criteria are measurable and directly observable from the \
         provided artifacts (code, screenshots, etc.). Include criteria for edge cases and \
         error handling, as humans often value robustness and reliability. For tasks involving \
         interactivity or visuals, generate criteria that assess responsiveness, usability, and \
         visual appeal. Avoid overly technical criteria that are difficult to evaluate from the \
         provided artifacts.",
        "When judging each criterion, prioritize evidence from screenshots and visual outputs \
         over code structure or comments. For correctness, verify that the solution meets all \
         requirements and handles edge cases. For UI/UX design, assess visual appeal, \
         usability, and consistency. When evaluating maintainability, focus on code \
         organization and modularity, but remember that humans often value correctness and \
         user-facing features more. For efficiency, measure performance from the provided \
         artifacts, but recognize that humans may overlook minor inefficiencies if the solution \
         is correct and visually appealing. Always consider the task's primary goals and \
         prioritize criteria that align with those goals.",
        "In the final judgment, weigh correctness and UI/UX design most heavily, especially if \
         the solutions differ in these areas. Consider maintainability and explainability as \
         secondary factors, but only if they significantly impact the primary goals. Use \
         tiebreakers like completeness, visual appeal, and adherence to requirements to resolve \
         close calls. Remember that humans often value solutions that are both correct and \
         visually appealing, even if they are slightly less efficient or maintainable. When in \
         doubt, lean towards the solution that better aligns with the task's primary \
         objectives.",
    )
}

fn web_development() -> GuidanceBlock {
    block(
        &[
            "Humans prioritize visual correctness and interactivity over code structure and \
             efficiency in web tasks.",
            "Humans value responsiveness and accessibility as key factors in web development.",
        ],
        "For web tasks, generate criteria that focus on visual layout, interactivity, and \
         responsiveness. Include specific criteria for visual correctness, such as alignment, \
         spacing, and typography. Assess interactivity by evaluating how well the UI responds \
         to user actions and whether it provides clear feedback. Measure responsiveness by \
         checking how the solution adapts to different screen sizes and devices. Also, include \
         criteria for accessibility, such as proper use of semantic HTML, ARIA attributes, and \
         keyboard navigation support. Avoid overly technical criteria that are difficult to \
         evaluate from screenshots alone.",
        "When judging web tasks, prioritize visual correctness and interactivity. Verify that \
         the solution meets all UI/UX requirements and handles edge cases. For interactivity, \
         assess how well the UI responds to user actions and whether it provides clear \
         feedback. Measure responsiveness by checking how the solution adapts to different \
         screen sizes and devices. Always consider accessibility features, such as proper use \
         of semantic HTML, ARIA attributes, and keyboard navigation support. Use screenshots to \
         evaluate visual correctness and interactivity, and rely on code snippets for assessing \
         maintainability and efficiency only when necessary.",
        "In the final judgment for web tasks, weigh visual correctness and interactivity most \
         heavily. Consider responsiveness and accessibility as secondary factors, but only if \
         they significantly impact the primary goals. Use tiebreakers like completeness, visual \
         appeal, and adherence to requirements to resolve close calls. Remember that humans \
         often value solutions that are both visually appealing and interactive, even if they \
         are slightly less efficient or maintainable. When in doubt, lean towards the solution \
         that better aligns with the task's primary objectives.",
    )
}

fn game_development() -> GuidanceBlock {
    block(
        &[
            "Humans prioritize gameplay mechanics and visual appeal over code structure and \
             efficiency in game tasks.",
            "Humans value responsiveness and smooth animations as key factors in game \
             development.",
        ],
        "For game tasks, generate criteria that focus on gameplay mechanics, visual appeal, and \
         responsiveness. Include specific criteria for gameplay correctness, such as handling \
         edge cases and ensuring smooth animations. Assess visual appeal by evaluating the \
         overall design, color scheme, and consistency. Measure responsiveness by checking how \
         well the game handles user input and maintains a smooth frame rate. Also, include \
         criteria for smooth animations and transitions, as humans often value visual polish in \
         games. Avoid overly technical criteria that are difficult to evaluate from screenshots \
         alone.",
        "When judging game tasks, prioritize gameplay mechanics and visual appeal. Verify that \
         the solution meets all gameplay requirements and handles edge cases. For visual \
         appeal, assess the overall design, color scheme, and consistency. Measure \
         responsiveness by checking how well the game handles user input and maintains a smooth \
         frame rate. Always consider smooth animations and transitions, as humans often value \
         visual polish in games. Use screenshots to evaluate gameplay mechanics and visual \
         appeal, and rely on code snippets for assessing maintainability and efficiency only \
         when necessary.",
        "In the final judgment for game tasks, weigh gameplay mechanics and visual appeal most \
         heavily. Consider responsiveness and smooth animations as secondary factors, but only \
         if they significantly impact the primary goals. Use tiebreakers like completeness, \
         visual appeal, and adherence to requirements to resolve close calls. Remember that \
         humans often value solutions that are both visually appealing and mechanically sound, \
         even if they are slightly less efficient or maintainable. When in doubt, lean towards \
         the solution that better aligns with the task's primary objectives.",
    )
}

fn creative_coding() -> GuidanceBlock {
    block(
        &[
            "Humans prioritize visual correctness and interactivity over code structure and \
             efficiency in creative tasks.",
            "Humans value artistic expression and innovation as key factors in creative coding.",
        ],
        "For creative tasks, generate criteria that focus on visual correctness, interactivity, \
         and artistic expression. Include specific criteria for visual correctness, such as \
         alignment, spacing, and typography. Assess interactivity by evaluating how well the \
         solution responds to user actions and whether it provides clear feedback. Measure \
         artistic expression by checking the uniqueness and creativity of the solution. Also, \
         include criteria for innovation, such as novel approaches or unconventional \
         techniques. Avoid overly technical criteria that are difficult to evaluate from \
         screenshots alone.",
        "When judging creative tasks, prioritize visual correctness and interactivity. Verify \
         that the solution meets all visual and interactive requirements and handles edge \
         cases. For artistic expression, assess the uniqueness and creativity of the solution. \
         Measure innovation by checking for novel approaches or unconventional techniques. \
         Always consider artistic expression and innovation, as humans often value solutions \
         that are both visually appealing and creatively unique. Use screenshots to evaluate \
         visual correctness and interactivity, and rely on code snippets for assessing \
         maintainability and efficiency only when necessary.",
        "In the final judgment for creative tasks, weigh visual correctness and artistic \
         expression most heavily. Consider interactivity and innovation as secondary factors, \
         but only if they significantly impact the primary goals. Use tiebreakers like \
         completeness, visual appeal, and adherence to requirements to resolve close calls. \
         Remember that humans often value solutions that are both visually appealing and \
         creatively unique, even if they are slightly less efficient or maintainable. When in \
         doubt, lean towards the solution that better aligns with the task's primary \
         objectives.",
    )
}

fn diagram_creation() -> GuidanceBlock {
    block(
        &[
            "Humans prioritize visual correctness and clarity over code structure and \
             efficiency in diagram tasks.",
            "Humans value accuracy and completeness as key factors in diagram creation.",
        ],
        "For diagram tasks, generate criteria that focus on visual correctness, clarity, and \
         accuracy. Include specific criteria for visual correctness, such as alignment, \
         spacing, and typography. Assess clarity by evaluating the overall design, color \
         scheme, and consistency. Measure accuracy by checking how well the solution handles \
         edge cases and ensures smooth animations. Also, include criteria for completeness, as \
         humans often value solutions that meet all requirements. Avoid overly technical \
         criteria that are difficult to evaluate from screenshots alone.",
        "When judging diagram tasks, prioritize visual correctness and clarity. Verify that the \
         solution meets all visual and interactive requirements and handles edge cases. For \
         accuracy, assess the overall design, color scheme, and consistency. Measure \
         completeness by checking how well the solution handles edge cases and ensures smooth \
         animations. Always consider accuracy and completeness, as humans often value solutions \
         that are both visually appealing and accurate. Use screenshots to evaluate visual \
         correctness and clarity, and rely on code snippets for assessing maintainability and \
         efficiency only when necessary.",
        "In the final judgment for diagram tasks, weigh visual correctness and accuracy most \
         heavily. Consider clarity and completeness as secondary factors, but only if they \
         significantly impact the primary goals. Use tiebreakers like completeness, visual \
         appeal, and adherence to requirements to resolve close calls. Remember that humans \
         often value solutions that are both visually appealing and accurate, even if they are \
         slightly less efficient or maintainable. When in doubt, lean towards the solution that \
         better aligns with the task's primary objectives.",
    )
}

fn scientific_computing() -> GuidanceBlock {
    block(
        &[
            "Humans prioritize correctness and efficiency over code structure and \
             maintainability in scientific tasks.",
            "Humans value reproducibility and documentation as key factors in scientific \
             computing.",
        ],
        "For scientific tasks, generate criteria that focus on correctness, efficiency, and \
         reproducibility. Include specific criteria for correctness, such as handling edge \
         cases and ensuring accurate results. Assess efficiency by measuring performance from \
         the provided artifacts. Measure reproducibility by checking whether the solution \
         includes clear documentation and version control. Also, include criteria for \
         documentation, as humans often value solutions that are well-documented. Avoid overly \
         technical criteria that are difficult to evaluate from screenshots alone.",
        "When judging scientific tasks, prioritize correctness and efficiency. Verify that the \
         solution meets all correctness requirements and handles edge cases. For efficiency, \
         measure performance from the provided artifacts. Assess reproducibility by checking \
         whether the solution includes clear documentation and version control. Always consider \
         documentation, as humans often value solutions that are well-documented. Use \
         screenshots to evaluate correctness and efficiency, and rely on code snippets for \
         assessing maintainability and efficiency only when necessary.",
        "In the final judgment for scientific tasks, weigh correctness and efficiency most \
         heavily. Consider reproducibility and documentation as secondary factors, but only if \
         they significantly impact the primary goals. Use tiebreakers like completeness, visual \
         appeal, and adherence to requirements to resolve close calls. Remember that humans \
         often value solutions that are both correct and efficient, even if they are slightly \
         less maintainable or documented. When in doubt, lean towards the solution that better \
         aligns with the task's primary objectives.",
    )
}

fn problem_solving() -> GuidanceBlock {
    block(
        &[
            "Humans prioritize correctness and efficiency over code structure and \
             maintainability in problem-solving tasks.",
            "Humans value completeness and adherence to requirements as key factors in \
             problem-solving.",
        ],
        "For problem-solving tasks, generate criteria that focus on correctness, efficiency, \
         and completeness. Include specific criteria for correctness, such as handling edge \
         cases and ensuring accurate results. Assess efficiency by measuring performance from \
         the provided artifacts. Measure completeness by checking whether the solution meets \
         all requirements. Also, include criteria for adherence to requirements, as humans \
         often value solutions that are complete and accurate. Avoid overly technical criteria \
         that are difficult to evaluate from screenshots alone.",
        "When judging problem-solving tasks, prioritize correctness and efficiency. Verify that \
         the solution meets all correctness requirements and handles edge cases. For \
         efficiency, measure performance from the provided artifacts. Assess completeness by \
         checking whether the solution meets all requirements. Always consider adherence to \
         requirements, as humans often value solutions that are complete and accurate. Use \
         screenshots to evaluate correctness and efficiency, and rely on code snippets for \
         assessing maintainability and efficiency only when necessary.",
        "In the final judgment for problem-solving tasks, weigh correctness and efficiency most \
         heavily. Consider completeness and adherence to requirements as secondary factors, but \
         only if they significantly impact the primary goals. Use tiebreakers like \
         completeness, visual appeal, and adherence to requirements to resolve close calls. \
         Remember that humans often value solutions that are both correct and efficient, even \
         if they are slightly less maintainable or documented. When in doubt, lean towards the \
         solution that better aligns with the task's primary objectives.",
    )
}

fn main() {
    let mut category_specific_guidance = BTreeMap::new();
    category_specific_guidance.insert(TaskCategory::WebDevelopment, web_development());
    category_specific_guidance.insert(TaskCategory::GameDevelopment, game_development());
    category_specific_guidance.insert(TaskCategory::CreativeCoding, creative_coding());
    category_specific_guidance.insert(TaskCategory::DiagramCreation, diagram_creation());
    category_specific_guidance.insert(TaskCategory::ScientificComputing, scientific_computing());
    category_specific_guidance.insert(TaskCategory::ProblemSolving, problem_solving());

    let artifact = GuidanceArtifact {
        global: global_block(),
        category_specific_guidance,
        provenance: Provenance {
            synthesizer_model_id: "guidance-synthesizer-v1".to_string(),
            // Stand-in for the content hash of the train split the guidance
            // was derived from; fixed so the fixture bytes are stable.
            train_split_content_hash:
                "7f4ac23f36bfa19d3b8a2f9a5f76c86f0d6e5b1c9a4d3e2f1a0b9c8d7e6f5a4b".to_string(),
            created_at: "2026-08-01T00:00:00Z".to_string(),
            record_count: 24,
        },
    };

    let out = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/guidance.json");
    save_artifact(&artifact, &out).expect("write guidance fixture");
    println!("wrote {} (sha256 {})", out.display(), artifact.sha256_hex());
}
