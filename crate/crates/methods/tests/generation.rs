use std::sync::Arc;

use ifjudge_core::{Dataset, Document};
use ifjudge_gateway::{BackendDescriptor, Gateway, GenerationParams, ScriptRule};
use ifjudge_methods::{generate_answers, generate_instructions, GenerationDefaults, MethodError, Templates};

const EMAIL: &str = "Lee, You should be receiving a package shortly containing the following: \
3. Assignment and assumption agreement to move the equipment from TurboPark to the CAED I. \
There will be one for CAED II as well. This document is being reviewed by the bank, so I'm not \
convinced it is in final form. You will note that there is an acknowledgement section for GE. \
I cut and pasted from the consent to assignment from the TurboPark documents, but shortened the \
whole thing considerably.";

fn gateway(id: &str, family: &str, rules: Vec<ScriptRule>) -> Arc<Gateway> {
    Arc::new(Gateway::new(BackendDescriptor::scripted(id, family, rules)).unwrap())
}

fn params() -> GenerationParams {
    GenerationDefaults::default().instruction_params
}

#[test]
fn three_lines_become_three_grounded_instructions() {
    let doc = Document::new("aeslc", EMAIL);
    let g = gateway(
        "gpt4",
        "gpt",
        vec![ScriptRule::respond(
            "generate a list of 3-5 instructions",
            "1. Briefly describe the purpose of the assignment and assumption agreement mentioned in the paragraph.\n\
             2. Explain the changes made to the GE acknowledgement section in the context of the TurboPark documents.\n\
             3. Summarize the final steps regarding the CA facility agreements and signature pages.\n",
        )],
    );
    let instructions = generate_instructions(&doc, &g, &Templates::builtin(), &params()).unwrap();
    assert_eq!(instructions.len(), 3);
    assert!(instructions[0].text.starts_with("Briefly describe the purpose of the assignment and assumption agreement"));
    for (n, i) in instructions.iter().enumerate() {
        assert_eq!(i.document_id, doc.id);
        assert_eq!(i.generator_id, "gpt4");
        assert_eq!(i.id, format!("{}:i{}", doc.id, n + 1));
    }
    // the document reached the model
    let again = generate_instructions(&doc, &g, &Templates::builtin(), &params()).unwrap();
    assert_eq!(again, instructions);
    assert_eq!(g.calls(), 1);
}

#[test]
fn seven_lines_twice_is_malformed() {
    let doc = Document::new("aeslc", EMAIL);
    let g = gateway("gpt4", "gpt", vec![ScriptRule::respond("", "a\nb\nc\nd\ne\nf\ng")]);
    match generate_instructions(&doc, &g, &Templates::builtin(), &params()) {
        Err(MethodError::Malformed { raw }) => assert_eq!(raw.len(), 2),
        other => panic!("{other:?}"),
    }
    assert_eq!(g.calls(), 2);
}

#[test]
fn malformed_then_valid_succeeds_on_retry() {
    let doc = Document::new("aeslc", EMAIL);
    let g = gateway("gpt4", "gpt", vec![ScriptRule::cycle("", &["only one", "x\ny\nz\nw"])]);
    let got = generate_instructions(&doc, &g, &Templates::builtin(), &params()).unwrap();
    assert_eq!(got.len(), 4);
}

#[test]
fn answers_from_three_backends_pass_validation() {
    let doc = Document::new("aeslc", EMAIL);
    let g = gateway("gpt4", "gpt", vec![ScriptRule::respond("", "one\ntwo\nthree")]);
    let instructions = generate_instructions(&doc, &g, &Templates::builtin(), &params()).unwrap();
    let backends = vec![
        gateway(
            "palm_s",
            "palm",
            vec![ScriptRule::respond(
                "Instruction: one",
                "The assignment and assumption agreement is to move the equipment from TurboPark to the CAED I.",
            )],
        ),
        gateway("palm_sc", "palm", vec![ScriptRule::respond("", "Another answer.")]),
        gateway("gpt35", "gpt", vec![ScriptRule::respond("", "A third answer.")]),
    ];
    let (answers, errors) =
        generate_answers(&doc, &instructions[0], &backends, &Templates::builtin(), &GenerationDefaults::default().answer_params)
            .unwrap();
    assert!(errors.is_empty());
    assert_eq!(answers.len(), 3);
    assert!(answers[0].text.contains("move the equipment from TurboPark to the CAED I"));
    let ids: Vec<&str> = answers.iter().map(|a| a.generator_id.as_str()).collect();
    assert_eq!(ids, ["palm_s", "palm_sc", "gpt35"]);
    assert_eq!(answers[2].lm_family, "gpt");
    Dataset::builder()
        .document(doc)
        .instructions(instructions)
        .answers(answers)
        .build()
        .unwrap();
}

#[test]
fn failing_backend_is_isolated() {
    let doc = Document::new("aeslc", EMAIL);
    let g = gateway("gpt4", "gpt", vec![ScriptRule::respond("", "one\ntwo\nthree")]);
    let instruction = generate_instructions(&doc, &g, &Templates::builtin(), &params()).unwrap().remove(0);
    let backends = vec![
        gateway("ok1", "a", vec![ScriptRule::respond("", "fine")]),
        gateway("bad", "b", vec![ScriptRule::fail("", "rate limited")]),
        gateway("ok2", "c", vec![ScriptRule::respond("", "also fine")]),
    ];
    let (answers, errors) =
        generate_answers(&doc, &instruction, &backends, &Templates::builtin(), &GenerationParams::new(0.3, 64)).unwrap();
    assert_eq!(answers.len(), 2);
    assert_eq!(errors.len(), 1);
    assert_eq!(errors[0].0, "bad");
    assert!(generate_answers(&doc, &instruction, &[], &Templates::builtin(), &GenerationParams::new(0.3, 64)).is_err());
}
