use std::sync::Arc;

use super::*;
use crate::fixtures;
use crate::scenario::{create_hunt, HuntType};

const TRAINER: ClientId = ClientId(1);
const RADIO1: ClientId = ClientId(2);
const H1A: ClientId = ClientId(3);
const H1B: ClientId = ClientId(4);
const RADIO2: ClientId = ClientId(5);
const H2A: ClientId = ClientId(6);
const H2B: ClientId = ClientId(7);

fn scenario_from(building: &Building, room: &str, obstacles: &[&str]) -> Scenario {
    let mut config = fixtures::scenario_eq1(building).config().clone();
    config.start_room = room.into();
    config.obstacles = obstacles.iter().map(|e| EdgeId::from(*e)).collect();
    create_hunt(building, config).unwrap()
}

fn lobby(room: &str, obstacles: &[&str]) -> Session {
    let b = fixtures::minibuild();
    let s = scenario_from(&b, room, obstacles);
    Session::new(Arc::new(b), s, 7).unwrap()
}

fn join_all(s: &mut Session, teams: usize) {
    s.join(TRAINER, Role::Trainer, None, "trainer").unwrap();
    let ids = [(RADIO1, H1A, H1B), (RADIO2, H2A, H2B)];
    for (i, (r, a, b)) in ids.iter().take(teams).enumerate() {
        let team = Some(TeamId(i as u32 + 1));
        s.join(*r, Role::Radio, team, "radio").unwrap();
        s.join(*a, Role::Hunter, team, "hunter").unwrap();
        s.join(*b, Role::Hunter, team, "hunter").unwrap();
    }
}

fn hunting(room: &str, obstacles: &[&str], teams: usize) -> Session {
    let mut s = lobby(room, obstacles);
    join_all(&mut s, teams);
    s.start_preparation().unwrap();
    s.start_hunt().unwrap();
    s
}

fn node_of(s: &Session, c: ClientId) -> Option<String> {
    match s.avatar(c).unwrap().location.unwrap() {
        Location::Node { node } => Some(s.building().graph_node(node).id.to_string()),
        Location::Edge { .. } => None,
    }
}

fn step_n(s: &mut Session, n: usize) {
    for _ in 0..n {
        s.step(&[]);
    }
}

#[test]
fn create_session_defaults() {
    let s = lobby("R_C", &[]);
    assert_eq!(s.phase(), Phase::Lobby);
    assert_eq!(s.tick(), 0);
    assert_eq!(s.avatars().count(), 0);
    assert_eq!(s.state_hash(), lobby("R_C", &[]).state_hash());
    assert_eq!(s.state_hash().len(), 16);
}

#[test]
fn create_session_rejects_other_building() {
    let b = fixtures::minibuild();
    let s = fixtures::scenario_eq1(&b);
    let mut other = b.render();
    other = other.replacen("\"minibuild\"", "\"otherbuild\"", 1);
    let other = Building::load_str(&other).unwrap();
    assert!(matches!(
        Session::new(Arc::new(other), s, 1),
        Err(SessionError::Scenario(ScenarioError::BuildingMismatch { .. }))
    ));
}

#[test]
fn join_rules() {
    let mut s = lobby("R_C", &[]);
    assert!(s.join(TRAINER, Role::Trainer, None, "t").is_ok());
    assert_eq!(
        s.join(ClientId(99), Role::Trainer, None, "t2"),
        Err(SessionError::SecondTrainer)
    );
    assert_eq!(
        s.join(H1A, Role::Hunter, Some(TeamId(1)), "h"),
        Err(SessionError::UnknownTeam(Some(TeamId(1))))
    );
    s.join(RADIO1, Role::Radio, Some(TeamId(1)), "r").unwrap();
    let before = s.avatars().count();
    s.join(H1A, Role::Hunter, Some(TeamId(1)), "h").unwrap();
    assert_eq!(s.avatars().count(), before + 1);
    assert_eq!(
        s.join(H1A, Role::Hunter, Some(TeamId(1)), "h"),
        Err(SessionError::DuplicateClient(H1A))
    );
    assert_eq!(
        s.join(ClientId(50), Role::Radio, Some(TeamId(1)), "r"),
        Err(SessionError::RadioTaken(TeamId(1)))
    );
}

#[test]
fn start_preparation_checks_teams() {
    let mut s = lobby("R_C", &[]);
    join_all(&mut s, 2);
    assert!(s.start_preparation().is_ok());
    assert_eq!(s.phase(), Phase::Preparation);

    let mut s = lobby("R_C", &[]);
    s.join(TRAINER, Role::Trainer, None, "t").unwrap();
    s.join(RADIO1, Role::Radio, Some(TeamId(1)), "r").unwrap();
    s.join(H1A, Role::Hunter, Some(TeamId(1)), "h").unwrap();
    assert!(matches!(
        s.start_preparation(),
        Err(SessionError::IncompleteTeam { .. })
    ));

    let mut s = lobby("R_C", &[]);
    s.join(RADIO1, Role::Radio, Some(TeamId(1)), "r").unwrap();
    s.join(H1A, Role::Hunter, Some(TeamId(1)), "h").unwrap();
    s.join(H1B, Role::Hunter, Some(TeamId(1)), "h").unwrap();
    assert_eq!(s.start_preparation(), Err(SessionError::NoTrainer));
}

#[test]
fn start_hunt_spawns() {
    let s = hunting("R_C", &[], 1);
    assert_eq!(node_of(&s, H1A).as_deref(), Some("n4"));
    assert_eq!(node_of(&s, H1B).as_deref(), Some("n5"));
    assert_eq!(node_of(&s, RADIO1).as_deref(), Some("n4"));
    assert_eq!(s.hunt_start(), Some(0));

    let mut s = lobby("R_C", &[]);
    join_all(&mut s, 1);
    s.join(ClientId(8), Role::Hunter, Some(TeamId(1)), "h3").unwrap();
    s.start_preparation().unwrap();
    s.start_hunt().unwrap();
    assert_eq!(node_of(&s, ClientId(8)).as_deref(), Some("n4"));

    let mut s = lobby("R_C", &[]);
    join_all(&mut s, 1);
    assert_eq!(
        s.start_hunt(),
        Err(SessionError::WrongPhase {
            actual: Phase::Lobby
        })
    );
}

#[test]
fn walking_n1_to_n2_takes_100_ticks() {
    let mut s = hunting("R_A", &[], 1);
    let out = s.step(&[(H1A, Command::MoveTo { node: "n2".into() })]);
    assert_eq!(out.results, vec![Ok(vec![])]);
    step_n(&mut s, 98);
    assert_eq!(s.tick(), 99);
    assert_eq!(node_of(&s, H1A), None);
    s.step(&[]);
    assert_eq!(s.tick(), 100);
    assert_eq!(node_of(&s, H1A).as_deref(), Some("n2"));
    assert_eq!(s.placement_of(H1A).unwrap().pos, Point::new(7.0, 0.0));
}

#[test]
fn mid_edge_advances_seven_centimeters() {
    let mut s = hunting("R_A", &[], 1);
    s.step(&[(H1A, Command::MoveTo { node: "n2".into() })]);
    let mut last = s.placement_of(H1A).unwrap().pos;
    for _ in 0..50 {
        s.step(&[]);
        let p = s.placement_of(H1A).unwrap().pos;
        assert!((p.x - last.x - 0.07).abs() < 1e-9);
        last = p;
    }
}

#[test]
fn move_errors() {
    let mut s = hunting("R_C", &["e23"], 1);
    let out = s.step(&[
        (H1A, Command::MoveTo { node: "n3".into() }),
        (H1B, Command::MoveTo { node: "n1".into() }),
        (RADIO1, Command::MoveTo { node: "n5".into() }),
    ]);
    assert_eq!(out.results[0], Ok(vec![]));
    assert_eq!(out.results[1], Err(SessionError::NotAdjacent("n1".into())));
    assert!(matches!(out.results[2], Err(SessionError::WrongRole { .. })));
    step_n(&mut s, 60);
    assert_eq!(node_of(&s, H1A).as_deref(), Some("n3"));
    let out = s.step(&[(H1A, Command::MoveTo { node: "n2".into() })]);
    assert_eq!(out.results[0], Err(SessionError::EdgeBlocked("n2".into())));
    s.step(&[]);
    assert_eq!(node_of(&s, H1A).as_deref(), Some("n3"));

    let mut s = lobby("R_C", &[]);
    join_all(&mut s, 1);
    assert!(matches!(
        s.apply(H1A, &Command::MoveTo { node: "n3".into() }),
        Err(SessionError::WrongPhase { .. })
    ));
}

#[test]
fn radios_teleport() {
    let mut s = hunting("R_C", &[], 1);
    let out = s.step(&[
        (RADIO1, Command::MoveRadio { node: "n5".into() }),
        (RADIO1, Command::MoveRadio { node: "n9".into() }),
    ]);
    assert_eq!(out.results[0], Ok(vec![]));
    assert_eq!(out.results[1], Err(SessionError::UnknownNode("n9".into())));
    let p = s.placement_of(RADIO1).unwrap();
    assert_eq!((s.building().floor_id(p.floor).as_str(), p.pos), ("F1", Point::new(0.0, 5.0)));

    let mut s = lobby("R_C", &[]);
    join_all(&mut s, 1);
    assert!(matches!(
        s.move_radio(RADIO1, &"n5".into()),
        Err(SessionError::WrongPhase { .. })
    ));
}

#[test]
fn pointing_highlights() {
    // R_B spawns hunters on n2 and n3, both with a clear line to EQ1.
    let mut s = hunting("R_B", &[], 1);
    let eq = Point::new(6.5, 4.0);
    let a = s.placement_of(H1A).unwrap().pos.angle_to(eq);
    s.step(&[(H1A, Command::Point { angle: Some(a) })]);
    assert_eq!(s.avatar(H1A).unwrap().highlight.as_ref().map(|e| e.as_str()), Some("EQ1"));
    s.step(&[(H1A, Command::Point { angle: None })]);
    assert_eq!(s.avatar(H1A).unwrap().highlight, None);

    // n1 looks at EQ1 through the partition wall.
    let mut s = hunting("R_A", &[], 1);
    let a = Point::new(0.0, 0.0).angle_to(eq);
    s.step(&[(H1A, Command::Point { angle: Some(a) })]);
    assert_eq!(s.avatar(H1A).unwrap().pointing, Some(a));
    assert_eq!(s.avatar(H1A).unwrap().highlight, None);
}

#[test]
fn guidance_relay() {
    let mut s = hunting("R_C", &[], 2);
    let events = s.send_guidance(RADIO1, "take the stairs", None).unwrap();
    match &events[0] {
        Event::Guidance {
            recipients, text, ..
        } => {
            assert_eq!(recipients, &vec![H1A, H1B, TRAINER]);
            assert_eq!(text, "take the stairs");
        }
        e => panic!("unexpected {e:?}"),
    }
    assert_eq!(
        s.send_guidance(H1A, "follow me", None),
        Err(SessionError::NotTeamRadio(H1A))
    );
    assert!(s.send_guidance(RADIO2, "", None).is_ok());
    // guidance is not tick-bound
    assert!(s.apply(RADIO1, &Command::Guidance { text: "x".into(), directive: None }).is_ok());
}

#[test]
fn idle_ticks_are_stable_and_deterministic() {
    let mut a = hunting("R_C", &[], 2);
    let mut b = hunting("R_C", &[], 2);
    let before: Vec<_> = a.avatars().map(|x| a.placement_of(x.client)).collect();
    for _ in 0..100 {
        a.step(&[]);
        b.step(&[]);
        assert_eq!(a.state_hash(), b.state_hash());
    }
    let after: Vec<_> = a.avatars().map(|x| a.placement_of(x.client)).collect();
    assert_eq!(before, after);
}

#[test]
fn identical_command_logs_give_identical_hashes() {
    let mut a = hunting("R_C", &[], 1);
    let mut b = hunting("R_C", &[], 1);
    let script: Vec<Vec<(ClientId, Command)>> = (0..120)
        .map(|t| match t {
            0 => vec![(H1A, Command::MoveTo { node: "n3".into() })],
            3 => vec![(H1B, Command::MoveTo { node: "n4".into() })],
            70 => vec![(H1A, Command::Point { angle: Some(-2.0) })],
            _ => vec![],
        })
        .collect();
    for cmds in &script {
        a.step(cmds);
        b.step(cmds);
        assert_eq!(a.state_hash(), b.state_hash());
    }
}

#[test]
fn hash_changes_when_a_hunter_moves() {
    let mut a = hunting("R_A", &[], 1);
    let mut b = hunting("R_A", &[], 1);
    a.step(&[(H1A, Command::MoveTo { node: "n2".into() })]);
    b.step(&[]);
    assert_ne!(a.state_hash(), b.state_hash());
}

fn angle_from(s: &Session, c: ClientId) -> f64 {
    s.placement_of(c).unwrap().pos.angle_to(Point::new(6.5, 4.0))
}

#[test]
fn validation_after_forty_held_ticks() {
    let mut s = hunting("R_B", &[], 1);
    step_n(&mut s, 300);
    let (a, b) = (angle_from(&s, H1A), angle_from(&s, H1B));
    s.step(&[
        (H1A, Command::Point { angle: Some(a) }),
        (H1B, Command::Point { angle: Some(b) }),
    ]);
    assert_eq!(s.tick(), 301);
    assert_eq!(s.teams()[0].progress, 1);
    step_n(&mut s, 38);
    assert_eq!(s.teams()[0].progress, 39);
    assert_eq!(s.teams()[0].finish_tick, None);
    let out = s.step(&[]);
    assert_eq!(s.tick(), 340);
    assert_eq!(s.teams()[0].finish_tick, Some(340));
    assert!(out.events.iter().any(|e| matches!(e, Event::HuntEnded { .. })));
    assert_eq!(s.phase(), Phase::Debrief);
    assert_eq!(
        s.scoreboard(),
        vec![ScoreEntry {
            team: TeamId(1),
            seconds: Some(17.0)
        }]
    );
}

#[test]
fn dropping_resets_progress() {
    let mut s = hunting("R_B", &[], 1);
    step_n(&mut s, 199);
    let (a, b) = (angle_from(&s, H1A), angle_from(&s, H1B));
    s.step(&[
        (H1A, Command::Point { angle: Some(a) }),
        (H1B, Command::Point { angle: Some(b) }),
    ]);
    step_n(&mut s, 18);
    assert_eq!(s.tick(), 218);
    assert_eq!(s.teams()[0].progress, 19);
    s.step(&[]);
    s.step(&[(H1B, Command::Point { angle: None })]);
    assert_eq!(s.tick(), 220);
    assert_eq!(s.teams()[0].progress, 0);
}

#[test]
fn visibility_matrix() {
    let mut s = hunting("R_C", &[], 2);
    let hunter = s.visibility_view(H1A).unwrap();
    let seen: Vec<_> = hunter.avatars.iter().map(|a| a.client).collect();
    assert_eq!(seen, vec![H1B]);
    assert_eq!(hunter.you.as_ref().unwrap().client, H1A);

    let radio = s.visibility_view(RADIO1).unwrap();
    let seen: Vec<_> = radio.avatars.iter().map(|a| a.client).collect();
    assert_eq!(seen, vec![H1A, H1B]);

    let trainer = s.visibility_view(TRAINER).unwrap();
    assert_eq!(trainer.avatars.len(), 6);

    s.step(&[(
        TRAINER,
        Command::SetVisibility {
            teams: [TeamId(1)].into(),
        },
    )]);
    let has_trainer = |s: &Session, c| {
        s.visibility_view(c)
            .unwrap()
            .avatars
            .iter()
            .any(|a| a.role == Role::Trainer)
    };
    assert!(has_trainer(&s, H1A));
    assert!(has_trainer(&s, RADIO1));
    assert!(!has_trainer(&s, H2A));
    assert!(!has_trainer(&s, RADIO2));

    s.step(&[(
        TRAINER,
        Command::Observe {
            teams: [TeamId(2)].into(),
        },
    )]);
    let trainer = s.visibility_view(TRAINER).unwrap();
    assert!(trainer.avatars.iter().all(|a| a.team == Some(TeamId(2))));
    assert_eq!(
        s.visibility_view(ClientId(77)),
        Err(SessionError::UnknownClient(ClientId(77)))
    );
}

#[test]
fn screenshots() {
    let mut s = hunting("R_C", &[], 1);
    step_n(&mut s, 499);
    let shot = Command::Screenshot {
        floor: "F0".into(),
        viewpoint: Point::new(1.0, 2.0),
        team: None,
    };
    let out = s.step(&[(TRAINER, shot.clone()), (TRAINER, shot.clone()), (H1A, shot)]);
    assert_eq!(s.trainer().screenshots.len(), 2);
    assert_eq!(s.trainer().screenshots[0].tick, 500);
    assert_eq!(s.trainer().screenshots[0].hunt_seconds, 25.0);
    assert_eq!(out.results[2], Err(SessionError::NotTrainer(H1A)));
}

#[test]
fn scoreboard_ordering() {
    let mut s = hunting("R_C", &[], 2);
    assert_eq!(
        s.scoreboard(),
        vec![
            ScoreEntry { team: TeamId(1), seconds: None },
            ScoreEntry { team: TeamId(2), seconds: None },
        ]
    );
    s.teams[0].finish_tick = Some(2410);
    s.teams[1].finish_tick = Some(1900);
    assert_eq!(
        s.scoreboard(),
        vec![
            ScoreEntry { team: TeamId(2), seconds: Some(95.0) },
            ScoreEntry { team: TeamId(1), seconds: Some(120.5) },
        ]
    );
}

#[test]
fn zone_hunt_validates_on_arrival() {
    let b = fixtures::minibuild();
    let mut config = fixtures::scenario_eq1(&b).config().clone();
    config.start_room = "R_C".into();
    config.hunt_type = HuntType::RegroupInZone {
        floor: "F1".into(),
        center: Point::new(7.0, 5.0),
        radius: 0.5,
    };
    let scenario = create_hunt(&b, config).unwrap();
    let mut s = Session::new(Arc::new(b), scenario, 3).unwrap();
    join_all(&mut s, 1);
    s.start_preparation().unwrap();
    s.start_hunt().unwrap();
    // H1A already stands on n4 inside the zone; H1B walks in from n5.
    s.step(&[(H1B, Command::MoveTo { node: "n4".into() })]);
    while s.phase() == Phase::Hunting {
        s.step(&[]);
    }
    // 6.5 m to the zone edge takes 93 ticks; the 40th tick inside validates.
    assert_eq!(s.teams()[0].finish_tick, Some(93 + 39));
}

#[test]
fn trainer_only_authoring() {
    let mut s = lobby("R_C", &[]);
    join_all(&mut s, 1);
    assert_eq!(
        s.apply(RADIO1, &Command::PlaceObstacle { edge: "e12".into() }),
        Err(SessionError::NotTrainer(RADIO1))
    );
    assert!(s.apply(TRAINER, &Command::PlaceObstacle { edge: "e12".into() }).is_ok());
    assert_eq!(s.scenario().obstacles().len(), 1);
    let before = s.state_hash();
    assert!(matches!(
        s.apply(TRAINER, &Command::PlaceObstacle { edge: "e45".into() }),
        Err(SessionError::Scenario(ScenarioError::UnreachableObjective(_)))
    ));
    assert_eq!(before, s.state_hash());
}
