use gsr_web::Demo;

#[test]
fn initialize_step_render() {
    let mut d = Demo::build("taylor_vortex", 120, 1).unwrap();
    assert_eq!((d.frame(), d.particles()), (0, 121));
    let px = d.render("vorticity", 48).unwrap();
    assert_eq!(px.len(), 48 * d.height_for(48) * 4);
    assert!(px.chunks(4).all(|p| p[3] == 255));
    assert!(px.chunks(4).any(|p| p[..3] != [255, 255, 255]));
    let iters = d.step().unwrap();
    assert!(iters > 0 && iters <= 40);
    assert_eq!(d.frame(), 1);
    assert!(d.time() > 0.0);
    assert_eq!(d.render("speed", 16).unwrap().len(), 16 * d.height_for(16) * 4);
}

#[test]
fn same_seed_same_pixels() {
    let a = Demo::build("leapfrog2d", 80, 5).unwrap();
    let b = Demo::build("leapfrog2d", 80, 5).unwrap();
    assert_eq!(a.render("divergence", 32).unwrap(), b.render("divergence", 32).unwrap());
}

#[test]
fn rejects_three_dimensional_scenes() {
    assert!(Demo::build("ring_collide", 64, 0).is_err());
    assert!(Demo::build("nope", 64, 0).is_err());
}
