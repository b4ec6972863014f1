from slq_heat._cli import main

raise SystemExit(main())
