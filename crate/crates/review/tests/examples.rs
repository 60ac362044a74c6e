#[path = "../examples/review_session.rs"]
mod review_session;

#[test]
fn review_session() {
    review_session::run_example().unwrap();
}
