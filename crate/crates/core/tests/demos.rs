use orchestra::demos::{calculator_deployments, Demo};
use orchestra::harness::check_traces;

#[test]
fn every_demo_matches_its_transcript() {
    for demo in Demo::ALL {
        let run = demo.run(7).unwrap();
        assert!(run.passed(), "{demo}:\n{}", run.diff());
        check_traces(&run.traces).unwrap();
    }
}

#[test]
fn calculator_is_transparent_to_composition() {
    let runs = calculator_deployments(3).unwrap();
    let first = &runs[0];
    assert_eq!(
        first.responses,
        vec![r#"{"r":5}"#, r#"{"r":20}"#, r#"{"r":6}"#, "fault:DivisionByZero"]
    );
    for d in &runs {
        assert_eq!(d.client, "success", "{}", d.name);
        assert_eq!(d.result, "6 true", "{}", d.name);
        assert_eq!(d.responses, first.responses, "{}", d.name);
    }
    let embedded = runs.iter().find(|d| d.name == "embedded").unwrap();
    assert_eq!(embedded.socket_bytes, 0);
    assert!(embedded.local_bytes > 0);
}
