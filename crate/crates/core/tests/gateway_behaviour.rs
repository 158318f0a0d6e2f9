use pearl_core::gateway::{
    CachedGateway, GatewayError, LlmGateway, LlmRequest, Message, ModelConfig, ReplayEntry, ReplayGateway, Role,
    Source, Tag,
};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TAGS: [Tag; 8] = [
    Tag::Mine,
    Tag::Reduce,
    Tag::Plan,
    Tag::Correct,
    Tag::Refine,
    Tag::Exec,
    Tag::Map,
    Tag::Baseline,
];

fn random_text(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(0..40);
    (0..len)
        .map(|_| *b"aZ \"\n{7".choose(rng).unwrap() as char)
        .collect()
}

#[test]
fn cache_key_depends_on_content_not_tag_or_construction() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let model = ModelConfig::with_model(format!("m{}", rng.random_range(0..3)));
        let turns: Vec<Message> = (0..rng.random_range(1..4))
            .map(|i| {
                let text = random_text(&mut rng);
                if i % 2 == 0 { Message::user(text) } else { Message::assistant(text) }
            })
            .collect();
        let tag = *TAGS.choose(&mut rng).unwrap();
        let built = model.request(tag, turns.clone());

        // Same content written out field by field, with a different tag.
        let by_hand = LlmRequest {
            model: model.model.clone(),
            messages: turns
                .iter()
                .map(|m| Message {
                    role: m.role,
                    content: m.content.clone(),
                })
                .collect(),
            temperature: model.temperature,
            top_p: model.top_p,
            max_output_tokens: built.max_output_tokens,
            tag: if tag == Tag::Plan { Tag::Correct } else { Tag::Plan },
        };
        assert_eq!(built.cache_key(), by_hand.cache_key());
        let round_tripped: LlmRequest = serde_json::from_str(&serde_json::to_string(&built).unwrap()).unwrap();
        assert_eq!(built.cache_key(), round_tripped.cache_key());

        let mut changed = by_hand.clone();
        changed.messages[0].content.push('!');
        assert_ne!(built.cache_key(), changed.cache_key());
        let mut hotter = by_hand.clone();
        hotter.temperature = 0.5;
        assert_ne!(built.cache_key(), hotter.cache_key());
        assert_eq!(built.cache_key().len(), 64);
    }
}

#[test]
fn replay_queues_are_per_tag() {
    let gw = ReplayGateway::new([
        ReplayEntry::new(Tag::Plan, "p1"),
        ReplayEntry::new(Tag::Exec, "e1"),
        ReplayEntry::new(Tag::Plan, "p2"),
    ]);
    let m = ModelConfig::default();
    assert!(gw.order_sensitive());
    assert_eq!(gw.complete(&m.prompt(Tag::Exec, "x")).unwrap().response_text, "e1");
    assert_eq!(gw.complete(&m.prompt(Tag::Plan, "x")).unwrap().response_text, "p1");
    assert_eq!(gw.complete(&m.prompt(Tag::Plan, "y")).unwrap().response_text, "p2");
    let err = gw.complete(&m.prompt(Tag::Plan, "z")).unwrap_err();
    assert_eq!(err, GatewayError::ScriptExhausted { tag: Tag::Plan, consumed: 2 });
    assert_eq!(err.kind(), "script_exhausted");
    assert!(gw.remaining().is_empty());
}

#[test]
fn replay_transcript_errors_name_the_line() {
    let text = "{\"tag\":\"plan\",\"response_text\":\"a\"}\n\nnot json\n";
    let err = ReplayGateway::from_jsonl(text).err().unwrap();
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn cache_serves_second_call_without_the_inner_gateway() {
    let dir = tempfile::tempdir().unwrap();
    // Only one scripted answer: a second forwarded call would fail.
    let cached = CachedGateway::new(ReplayGateway::new([ReplayEntry::new(Tag::Exec, "once").with_tokens(9, 2)]), dir.path()).unwrap();
    let m = ModelConfig::default();
    let first = cached.complete(&m.prompt(Tag::Exec, "same prompt")).unwrap();
    let second = cached.complete(&m.prompt(Tag::Map, "same prompt")).unwrap_err();
    // Map has a different output limit, so it is a different key and reaches the empty script.
    assert_eq!(second.kind(), "script_exhausted");
    let again = cached.complete(&m.prompt(Tag::Exec, "same prompt")).unwrap();
    assert_eq!(first.source, Source::Replay);
    assert_eq!(again.source, Source::Cache);
    assert_eq!(again.response_text, "once");
    assert_eq!((again.prompt_tokens, again.completion_tokens), (9, 2));
    assert_eq!(cached.misses(), 2);
    assert_eq!(first.request.messages[0].role, Role::User);
}
